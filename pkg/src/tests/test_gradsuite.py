"""
Finite-difference gradient suite over every kernel and composite layer
"""

import pytest

from geoseg.gradsuite import CASES, SAMPLED, TOLERANCE, run_suite
from geoseg.models import STRATEGIES


class TestGradientSuite:
    """Test analytic gradients against central differences"""

    @pytest.mark.parametrize("name", sorted(CASES))
    def test_case_within_tolerance(self, name):
        """Max relative error over five seeds stays below tolerance"""
        assert run_suite([name])[name] < TOLERANCE

    def test_covers_every_fusion_strategy(self):
        """Each fusion strategy has its own case"""
        assert {f"fusion.{s}" for s in STRATEGIES} <= set(CASES)

    def test_covers_composites(self):
        """Attention, backbone, pyramid, head and loss composites are included"""
        for name in (
            "attention_block.window",
            "attention_block.global",
            "sfpn_level.up",
            "sfpn_level.down",
            "upsample_block",
            "backbone_forward",
            "build_pyramid",
            "unet_head",
            "seg_loss",
        ):
            assert name in CASES

    def test_unknown_case(self):
        """Unknown case names are rejected up front"""
        with pytest.raises(KeyError):
            run_suite(["no_such_kernel"])

    def test_location_gradients_for_every_strategy(self):
        """Encoder parameters feed every fusion strategy"""
        assert {f"locenc_fusion.{s}" for s in STRATEGIES} <= set(CASES)

    def test_large_cases_are_sampled(self):
        """Sampled cases exist and check a positive number of elements"""
        assert set(SAMPLED) <= set(CASES)
        assert all(n > 0 for n in SAMPLED.values())

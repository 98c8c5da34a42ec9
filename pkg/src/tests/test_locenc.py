"""
Tests for the spherical-harmonic location encoder
"""

import math

import numpy as np
import pytest
from scipy.special import eval_legendre, lpmv

from geoseg.autodiff import no_grad
from geoseg.models import GeoCoord, LocEncoderConfig
from geoseg.nn import LocationEncoder, ParamStore, encode_location, sh_basis
from geoseg.nn.locenc import init_loc_encoder, normalized_legendre, sh_bound


def _encoder(config, cache_size=16):
    store = ParamStore(seed=0, dtype=np.float64)
    init_loc_encoder(store.view("location"), config)
    return store, LocationEncoder(config, store.view("location"), cache_size=cache_size)


def _cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestLegendre:
    """Test the normalized associated Legendre recursion"""

    @pytest.mark.parametrize("x", [-0.9, -0.3, 0.0, 0.45, 0.99])
    def test_matches_scipy(self, x):
        """Values equal the orthonormalized scipy lpmv without the Condon-Shortley phase"""
        degree = 10
        p = normalized_legendre(x, math.sqrt(1 - x * x), degree)
        for l in range(degree):
            for m in range(l + 1):
                norm = math.sqrt(
                    (2 * l + 1) / (4 * math.pi) * math.factorial(l - m) / math.factorial(l + m)
                )
                expected = norm * (-1) ** m * lpmv(m, l, x)
                assert p[l, m] == pytest.approx(expected, abs=1e-10)


class TestBasis:
    """Test the real spherical-harmonic basis"""

    def test_length_is_degree_squared(self):
        """L10 has 100 components, L40 has 1600"""
        coord = GeoCoord(lon=12.5, lat=68.0)
        assert sh_basis(coord, 10).shape == (100,)
        assert sh_basis(coord, 40).shape == (1600,)

    def test_longitude_periodicity(self):
        """lon and lon + 360 give the same basis"""
        a = sh_basis(GeoCoord(lon=10.5, lat=70.25), 40)
        b = sh_basis(GeoCoord(lon=370.5, lat=70.25), 40)
        np.testing.assert_array_equal(a, b)

    def test_periodicity_for_random_longitudes(self, rng):
        """Any longitude shifted by a full turn gives a bit-identical basis"""
        for _ in range(200):
            lon, lat = rng.uniform(-180, 180), rng.uniform(-90, 90)
            base = sh_basis(GeoCoord(lon=lon, lat=lat), 40)
            assert np.array_equal(base, sh_basis(GeoCoord(lon=lon + 360, lat=lat), 40))
            assert np.array_equal(base, sh_basis(GeoCoord(lon=lon - 360, lat=lat), 40))

    def test_bounded_by_addition_theorem(self, rng):
        """|Y_lm| <= sqrt((2l+1) / 4pi) everywhere"""
        bound = sh_bound(40)
        for _ in range(20):
            coord = GeoCoord(lon=rng.uniform(-180, 180), lat=rng.uniform(-90, 90))
            assert np.all(np.abs(sh_basis(coord, 40)) <= bound + 1e-12)

    def test_degree_energy(self, rng):
        """The squared basis sums to L^2 / 4pi at any point"""
        coord = GeoCoord(lon=rng.uniform(-180, 180), lat=rng.uniform(-90, 90))
        assert np.sum(sh_basis(coord, 10) ** 2) == pytest.approx(100 / (4 * math.pi), rel=1e-10)

    def test_poles_are_finite(self):
        """The basis is defined at both poles"""
        for lat in (90.0, -90.0):
            assert np.all(np.isfinite(sh_basis(GeoCoord(lon=0.0, lat=lat), 40)))

    def test_finer_degree_separates_nearby_points(self, rng):
        """Nearby points are less similar under L40 than under L10"""
        l10, l40 = [], []
        for _ in range(100):
            lon, lat = rng.uniform(-180, 180), rng.uniform(-80, 80)
            a = GeoCoord(lon=lon, lat=lat)
            b = GeoCoord(lon=lon, lat=lat + 0.5)
            l10.append(_cosine(sh_basis(a, 10), sh_basis(b, 10)))
            l40.append(_cosine(sh_basis(a, 40), sh_basis(b, 40)))
        assert np.mean(l40) <= np.mean(l10)

    def test_similarity_depends_only_on_angle(self):
        """Basis cosine equals sum (2l+1) P_l(cos gamma) / L^2"""
        a = GeoCoord(lon=30.0, lat=60.0)
        b = GeoCoord(lon=30.0, lat=60.5)
        gamma = math.radians(0.5)
        for degree in (10, 40):
            expected = sum(
                (2 * l + 1) * eval_legendre(l, math.cos(gamma)) for l in range(degree)
            ) / degree**2
            assert _cosine(sh_basis(a, degree), sh_basis(b, degree)) == pytest.approx(
                expected, abs=1e-9
            )


class TestEncoder:
    """Test the embedding network and its cache"""

    def test_embedding_width(self):
        """The encoder emits embed_dim values"""
        config = LocEncoderConfig(degree=10, embed_dim=12, hidden=(16, 16))
        store = ParamStore(seed=0, dtype=np.float64)
        init_loc_encoder(store.view(), config)
        embedding = encode_location(GeoCoord(lon=1.0, lat=2.0), config, store.view())
        assert embedding.dim == 12
        assert embedding.source == GeoCoord(lon=1.0, lat=2.0)

    def test_granularity_presets(self):
        """L10 and L40 map to degrees 10 and 40"""
        assert LocEncoderConfig.for_granularity("L10").basis_dim == 100
        assert LocEncoderConfig.for_granularity("L40", embed_dim=8).hidden == (8, 8)

    def test_cache_only_without_gradients(self):
        """Embeddings are cached under no_grad and recomputed otherwise"""
        config = LocEncoderConfig(degree=10, embed_dim=4, hidden=(8, 8))
        _, encoder = _encoder(config)
        coord = GeoCoord(lon=5.0, lat=66.0)
        encoder(coord)
        assert encoder.misses == 0 and encoder.hits == 0
        with no_grad():
            first = encoder(coord)
            second = encoder(coord)
        assert encoder.misses == 1 and encoder.hits == 1
        assert first is second

    def test_parameter_update_invalidates_cache(self):
        """A version bump forces a fresh embedding"""
        config = LocEncoderConfig(degree=10, embed_dim=4, hidden=(8, 8))
        store, encoder = _encoder(config)
        coord = GeoCoord(lon=5.0, lat=66.0)
        with no_grad():
            encoder(coord)
            store.assign("location.fc2.bias", np.ones(4))
            store.bump_version()
            updated = encoder(coord)
        assert encoder.misses == 2
        unchanged = encode_location(coord, config, store.view("location"))
        np.testing.assert_array_equal(updated.values.data, unchanged.values.data)

    def test_cache_is_bounded(self):
        """Least recently used entries are evicted"""
        config = LocEncoderConfig(degree=10, embed_dim=4, hidden=(8, 8))
        _, encoder = _encoder(config, cache_size=2)
        with no_grad():
            for lon in (1.0, 2.0, 3.0, 1.0):
                encoder(GeoCoord(lon=lon, lat=0.0))
        assert encoder.misses == 4

    @pytest.mark.parametrize("seed", range(5))
    def test_antipodes_embed_differently(self, seed):
        """Opposite points of the sphere never share an embedding"""
        config = LocEncoderConfig(degree=10, embed_dim=8, hidden=(16, 16))
        store = ParamStore(seed=seed, dtype=np.float64)
        init_loc_encoder(store.view(), config)
        here = encode_location(GeoCoord(lon=-150.0, lat=68.5), config, store.view())
        there = encode_location(GeoCoord(lon=30.0, lat=-68.5), config, store.view())
        assert not np.array_equal(here.values.data, there.values.data)

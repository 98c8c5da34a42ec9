"""
Command-line interface for GeoSeg
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, NoReturn, Optional

from pydantic import ValidationError

from . import __version__
from .config import load_key_value_file
from .errors import ConfigError, GeosegError
from .logging_setup import configure_logging
from .models import DatasetConfig, RunConfig

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILED = 2


class _ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with the validation status instead of argparse's 2."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def cmd_gen_data(args: argparse.Namespace) -> int:
    """Generate the synthetic dataset and its manifest"""
    from .data import generate_from_config, write_dataset

    config = load_key_value_file(DatasetConfig, args.config)
    records = generate_from_config(config, args.seed)
    manifest = write_dataset(records, args.out or "data", config.n_classes)
    print(f"Wrote {len(records)} tiles, manifest {manifest}")
    return EXIT_OK


def _run_config(args: argparse.Namespace) -> RunConfig:
    overrides: Dict[str, object] = {"seed": args.seed}
    if getattr(args, "manifest", None):
        overrides["manifest"] = args.manifest
    return load_key_value_file(RunConfig, args.config, overrides)


def cmd_train(args: argparse.Namespace) -> int:
    """Train one configuration"""
    from .harness import train

    config = _run_config(args)
    result = train(config, Path(args.out) if args.out else None)
    print(f"Best epoch {result.best_epoch}: " + _format_row(result.best_val.row()))
    print(f"Checkpoint {result.checkpoint}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    """Evaluate a checkpoint on one split"""
    from .harness import evaluate
    from .harness.train import CHECKPOINT_NAME

    checkpoint, manifest = args.checkpoint, args.manifest
    if args.config:
        config = load_key_value_file(RunConfig, args.config)
        checkpoint = checkpoint or Path(config.output_dir) / CHECKPOINT_NAME
        manifest = manifest or config.manifest
    if not checkpoint:
        raise ConfigError("eval needs --checkpoint or a --config naming the run's output_dir")
    metrics, loss = evaluate(checkpoint, args.split, manifest)
    print(f"{args.split}: " + _format_row({**metrics.row(), "loss": loss}))
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    """Run the fusion ablation sweep"""
    from .harness import ablate, best_configuration

    config = _run_config(args)
    out = Path(args.out) if args.out else Path(config.output_dir) / "ablation.csv"
    rows = ablate(config, trials=args.trials, out=out, workers=args.workers)
    failed = sum(row.error is not None for row in rows)
    print(f"Wrote {len(rows)} rows to {out} ({failed} failed)")
    try:
        best = best_configuration(rows)
        print(f"Best: {best.placement}/{best.granularity}/{best.strategy} f1 {best.f1:.4f}")
    except ValueError:
        print("No fused configuration completed")
    return EXIT_OK


def cmd_grad_check(args: argparse.Namespace) -> int:
    """Finite-difference check of every kernel and composite layer"""
    from .gradsuite import TOLERANCE, run_suite

    try:
        results = run_suite(args.case or None)
    except KeyError as e:
        raise ConfigError(str(e.args[0])) from e
    worst = 0.0
    for name, error in results.items():
        status = "ok" if error < TOLERANCE else "FAIL"
        print(f"{name:<28} {error:.3e}  {status}")
        worst = max(worst, error)
    print(f"max relative error {worst:.3e} (tolerance {TOLERANCE:g})")
    return EXIT_OK if worst < TOLERANCE else EXIT_FAILED


def cmd_stats(args: argparse.Namespace) -> int:
    """Shape statistics for a JSON list of polygons ([[x, y], ...] in meters)"""
    from .evaluation import Polygon, geometry_stats, summarize_geometry

    try:
        raw = json.loads(Path(args.polygons).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"{args.polygons}: not valid JSON: {e}") from e
    if not isinstance(raw, list):
        raise ConfigError(f"{args.polygons}: expected a list of polygons")
    polygons = [Polygon.from_points(points) for points in raw]
    report = {
        "polygons": [geometry_stats(p).model_dump() for p in polygons],
        "summary": summarize_geometry(polygons),
    }
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_iterations(args: argparse.Namespace) -> int:
    """Training iterations for a dataset size and batch layout"""
    from .harness import iterations_for

    print(iterations_for(args.samples, args.epochs, args.batch, args.devices))
    return EXIT_OK


def _format_row(row: Dict[str, float]) -> str:
    return " ".join(f"{key}={value:.4f}" for key, value in row.items())


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(
        prog="geoseg",
        description="GeoSeg: location-aware ViT segmentation of geolocated tiles",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  geoseg gen-data --seed 7 --out data          # Synthetic ambiguity-mode dataset
  geoseg train --config run.cfg                # Train one configuration
  geoseg eval --checkpoint runs/x/best.gvck    # Test-split metrics of a checkpoint
  geoseg ablate --config run.cfg --trials 3    # Full fusion sweep to CSV
  geoseg grad-check                            # Gradient suite
  geoseg stats polygons.json                   # Geometry and compactness
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--debug", action="store_true", help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_ArgumentParser)
    sub.required = True

    p = sub.add_parser("gen-data", help=cmd_gen_data.__doc__)
    p.add_argument("--config", help="Dataset key=value config (default: built-in recipe)")
    p.add_argument("--seed", type=int, default=0, help="Generation seed (default: 0)")
    p.add_argument("--out", help="Output directory (default: data)")
    p.set_defaults(func=cmd_gen_data)

    for name, func in (("train", cmd_train), ("ablate", cmd_ablate)):
        p = sub.add_parser(name, help=func.__doc__)
        p.add_argument("--config", help="Run key=value config (default: built-in defaults)")
        p.add_argument("--seed", type=int, help="Override the config seed")
        p.add_argument("--manifest", help="Override the dataset manifest path")
        if name == "train":
            p.add_argument("--out", help="Output directory (default: config output_dir)")
        else:
            p.add_argument("--out", help="CSV path (default: <output_dir>/ablation.csv)")
            p.add_argument("--trials", type=int, default=1, help="Trials per configuration")
            p.add_argument("--workers", type=int, help="Worker processes (default: settings)")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", help=cmd_eval.__doc__)
    p.add_argument("--config", help="Run config; supplies the checkpoint and manifest not given here")
    p.add_argument("--checkpoint", help="Checkpoint file (.gvck; default: <output_dir>/best.gvck)")
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--manifest", help="Dataset manifest (default: the config's, else the checkpoint's)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grad-check", help=cmd_grad_check.__doc__)
    p.add_argument("--case", action="append", help="Only run this case (repeatable)")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("stats", help=cmd_stats.__doc__)
    p.add_argument("polygons", help="JSON file with a list of polygons")
    p.add_argument("--out", help="Also write the JSON report here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("iterations", help=cmd_iterations.__doc__)
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--epochs", type=int, default=75)
    p.add_argument("--batch", type=int, required=True, help="Per-device batch size")
    p.add_argument("--devices", type=int, default=1)
    p.set_defaults(func=cmd_iterations)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    configure_logging("DEBUG" if args.debug else None)
    try:
        return int(args.func(args))
    except (ConfigError, ValidationError) as e:
        print(f"geoseg: invalid configuration: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (GeosegError, OSError) as e:
        logger.debug("Command %s failed", args.command, exc_info=True)
        print(f"geoseg: {args.command} failed: {e}", file=sys.stderr)
        return EXIT_FAILED
    except KeyboardInterrupt:
        print("\nInterrupted", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())

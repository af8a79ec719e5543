"""Command-line entry points: sweeps, bound tables, verification, images."""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import _toml
from ._version import __version__
from .augment import STRATEGY_ALIASES, AugmentationStrategy
from .bounds import BoundQuery, bound_curve, write_bounds_csv
from .datagen import GeneratorConfig
from .pixel import (
    BackgroundPool,
    MaskedImage,
    StainBasis,
    copy_paste,
    hue_jitter,
    read_mask_csv,
    read_png,
    stain_jitter,
    write_png,
)
from .sweep import DEFAULT_DOMAIN_COUNTS, SweepSpec, emit_results, run_sweep, sweep_bound_curve
from .verify import run_verification


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="auglab",
        description="Simulation laboratory for augmentation under domain shift.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="run an experiment grid and emit CSV results")
    sweep.add_argument("--spec", required=True, help="sweep spec TOML file")
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.add_argument("--parallel", type=int, default=1, metavar="K",
                       help="worker processes (default 1)")
    sweep.add_argument("--aug", choices=sorted(STRATEGY_ALIASES),
                       help="restrict the sweep to one strategy")
    sweep.add_argument("--multiplicity", type=int, default=None,
                       help="override augmentation multiplicity")

    bounds = sub.add_parser("bounds", help="evaluate the bound curves as CSV")
    bounds.add_argument("--spec", required=True,
                        help="sweep spec or generator config TOML file")
    bounds.add_argument("--out", required=True, help="output CSV file")

    sub.add_parser("verify", help="run cross-formula consistency checks")

    image = sub.add_parser("augment-image", help="apply one image augmentation")
    image.add_argument("--op", required=True,
                       choices=("copy-paste", "stain-jitter", "hue-jitter"))
    image.add_argument("--input", required=True, help="input PNG")
    image.add_argument("--output", required=True, help="output PNG")
    image.add_argument("--seed", type=int, default=0)
    image.add_argument("--strength", type=float, default=0.05,
                       help="jitter strength (stain/hue ops)")
    image.add_argument("--mask", help="foreground mask (PNG or CSV; copy-paste)")
    image.add_argument("--background", action="append", default=[],
                       help="background PNG (repeatable; copy-paste)")
    image.add_argument("--label", default="object",
                       help="label carried by the input (copy-paste)")
    return parser


def _cmd_sweep(args: argparse.Namespace) -> int:
    spec = SweepSpec.load(args.spec)
    if args.aug is not None:
        multiplicity = args.multiplicity if args.multiplicity is not None else 5
        spec = SweepSpec.from_dict(
            {**spec.to_dict(), "strategy_kinds": [STRATEGY_ALIASES[args.aug]],
             "strategy_multiplicities": [multiplicity]}
        )
    elif args.multiplicity is not None:
        strategies = tuple(
            AugmentationStrategy(s.kind, args.multiplicity) for s in spec.strategies
        )
        spec = SweepSpec.from_dict(
            {**spec.to_dict(),
             "strategy_kinds": [s.kind for s in strategies],
             "strategy_multiplicities": [s.multiplicity for s in strategies]}
        )
    rows = run_sweep(spec, parallelism=args.parallel)
    if not rows:
        print("spec lists no strategies; nothing to do")
        return 0
    paths = emit_results(rows, sweep_bound_curve(spec), args.out, spec)
    errors = sum(1 for row in rows if row.error)
    print(f"wrote {len(rows)} rows ({errors} errored) to {paths['results']}")
    print(f"bound curves: {paths['bounds']}")
    print(f"metadata: {paths['metadata']}")
    return 0


def _cmd_bounds(args: argparse.Namespace) -> int:
    data = _toml.load_path(args.spec)
    if "config" in data:
        spec = SweepSpec.from_dict(data)
        config = spec.base_config
        counts = spec.domain_counts
    else:
        config = GeneratorConfig.from_dict(data)
        counts = DEFAULT_DOMAIN_COUNTS
    base = BoundQuery.from_config(config, int(counts[0]))
    write_bounds_csv(bound_curve(base, counts), args.out)
    print(f"wrote bound curves for D in {list(counts)} to {args.out}")
    return 0


def _cmd_verify() -> int:
    results = run_verification()
    failed = 0
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        failed += 0 if result.passed else 1
        print(f"{status} {result.name}: {result.detail}")
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 1 if failed else 0


def _load_mask(path: str) -> np.ndarray:
    if path.endswith(".csv"):
        return read_mask_csv(path)
    arr = read_png(path)
    return (arr[:, :, 0] > 0).astype(np.uint8)


def _cmd_augment_image(args: argparse.Namespace) -> int:
    image = read_png(args.input)
    if args.op == "stain-jitter":
        basis = StainBasis(strength=args.strength)
        out = stain_jitter(image, basis, args.seed)
    elif args.op == "hue-jitter":
        out = hue_jitter(image, args.strength, args.seed)
    else:
        if not args.mask or not args.background:
            print("copy-paste requires --mask and at least one --background",
                  file=sys.stderr)
            return 2
        mask = _load_mask(args.mask)
        example = MaskedImage(
            pixels=image, mask=mask, label=args.label, domain_id=0
        )
        backgrounds = tuple(
            MaskedImage(
                pixels=read_png(path),
                mask=np.zeros(mask.shape, dtype=np.uint8),
                label="empty",
                domain_id=i + 1,
            )
            for i, path in enumerate(args.background)
        )
        pool = BackgroundPool(backgrounds=backgrounds)
        out = copy_paste(example, pool, policy="All", rng_stream=args.seed).pixels
    write_png(out, args.output)
    print(f"wrote {args.output}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "sweep":
        return _cmd_sweep(args)
    if args.command == "bounds":
        return _cmd_bounds(args)
    if args.command == "verify":
        return _cmd_verify()
    if args.command == "augment-image":
        return _cmd_augment_image(args)
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())

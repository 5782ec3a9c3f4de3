"""Command-line entry point: ``poiexplain <subcommand> [--config ...] [--out ...]``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import dump_config, load_config
from .data import write_canonical_csv
from .pipeline import STAGES, Pipeline, StageError
from .synth import SynthParams, generate

_logger = logging.getLogger("poiexplain")

SUBCOMMAND_STAGES = {
    "ingest": ("ingest",),
    "subsample": ("subsample",),
    "featurize": ("featurize",),
    "recommend": ("recommend",),
    "evaluate": ("evaluate",),
    "explain": ("exclude", "eliminate", "regress"),
    "report": ("report",),
    "pipeline": STAGES,
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--out", help="run directory (or output directory for synth)")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--jobs", type=int, help="worker processes for the recommend stage")
    p.add_argument("--force", action="store_true", help="recompute stages already marked done")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="poiexplain",
                                     description="Explain POI recommender performance with data characteristics.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_STAGES:
        _add_common(sub.add_parser(name, help=f"run the {name} stage" if name != "pipeline" else "run every stage"))
    synth = sub.add_parser("synth", help="write a synthetic city as canonical CSV")
    _add_common(synth)
    synth.add_argument("--users", type=int, default=500)
    synth.add_argument("--venues", type=int, default=300)
    synth.add_argument("--checkins", type=int, default=20000)
    synth.add_argument("--clusters", type=int, default=8)
    synth.add_argument("--skew", type=float, default=1.0, help="power-law exponent of venue popularity")
    synth.add_argument("--seasonality", type=float, default=0.3)
    return parser


def _seed(value: int | None) -> int | None:
    if value is not None and not 0 <= value < 2**64:
        raise ValueError("--seed must be an unsigned 64-bit integer")
    return value


def cmd_synth(args: argparse.Namespace) -> Path:
    params = SynthParams(n_users=args.users, n_venues=args.venues, n_checkins=args.checkins,
                         n_clusters=args.clusters, popularity_skew=args.skew, seasonality=args.seasonality)
    cfg = load_config(args.config)
    seed = _seed(args.seed) if args.seed is not None else int(cfg["seed"])
    out = Path(args.out or "synthetic")
    out.mkdir(parents=True, exist_ok=True)
    frame = generate(params, seed=seed, bbox=cfg["bbox"])
    write_canonical_csv(frame, out / "checkins.csv")
    # a config next to the data makes `poiexplain pipeline --config <out>/config.yaml` work directly
    run_cfg = {"data": {"format": "canonical", "checkins": "checkins.csv"}, "seed": seed,
               "out": str((out / "run").resolve())}
    dump_config(run_cfg, out / "config.yaml")
    _logger.info("wrote %d check-ins to %s", len(frame), out / "checkins.csv")
    return out


def cmd_stages(args: argparse.Namespace, stages) -> None:
    cfg = load_config(args.config, seed=_seed(args.seed), jobs=args.jobs, out=args.out)
    Pipeline(cfg, force=args.force).run(stages)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            cmd_synth(args)
        else:
            cmd_stages(args, SUBCOMMAND_STAGES[args.command])
    except (ValueError, FileNotFoundError, StageError) as exc:
        _logger.error("%s", exc)
        return 2
    except Exception:
        _logger.exception("%s failed", args.command)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

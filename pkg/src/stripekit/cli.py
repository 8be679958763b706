"""Command-line interface binding the pipeline end to end.

Subcommands: ``synth`` (generate a virtual population), ``augment``
(grow library variants from one annotated patch), ``encode`` /
``decode`` (descriptor text round trips), ``match`` (rank a gallery),
and ``eval`` (run experiment sweeps from a plan file). Exit codes:
0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentConfig, AnnotatedPatch, build_library, load_library, save_library
from .codec import AceSequence, ParseError, Side, decode, encode, render_prose
from .harness import (
    ExperimentPlan,
    plan_cells,
    run_ap_grid,
    run_cull_sweep,
    run_injection_sweep,
    write_run,
)
from .manifest import read_manifest
from .matching import CostWeights, write_rankings
from .minutiae import minutia_from_dict, minutia_to_dict
from .raster import load_png
from .synthesis import (
    PopulationConfig,
    RegionStats,
    SynthesisConfig,
    default_library,
    default_region_stats,
    synthesize_population,
)
from .capture import CaptureConfig
from .util import ConfigError, check_keys


@dataclass
class RunConfig:
    """Flat configuration file with per-module sections; CLI flags override."""

    seed: int = 0
    library_dir: str | None = None
    manifest: str | None = None
    output_dir: str | None = None
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    capture: CaptureConfig = field(default_factory=CaptureConfig)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    region_stats: RegionStats | None = None
    matcher: CostWeights = field(default_factory=CostWeights)

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        data = json.loads(path.read_text())
        check_keys(data, cls.__dataclass_fields__, f"config {path}")
        kwargs = dict(data)
        if "augment" in kwargs:
            kwargs["augment"] = AugmentConfig.from_dict(kwargs["augment"])
        if "capture" in kwargs:
            kwargs["capture"] = CaptureConfig.from_dict(kwargs["capture"])
        if "synthesis" in kwargs:
            kwargs["synthesis"] = SynthesisConfig.from_dict(kwargs["synthesis"])
        if "region_stats" in kwargs and kwargs["region_stats"] is not None:
            kwargs["region_stats"] = RegionStats.from_dict(kwargs["region_stats"])
        if "matcher" in kwargs:
            kwargs["matcher"] = CostWeights.from_dict(kwargs["matcher"])
        cfg = cls(**kwargs)
        for name in ("library_dir", "manifest"):
            value = getattr(cfg, name)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{name} path does not exist: {value}")
        return cfg

    def snapshot(self) -> dict:
        from dataclasses import asdict

        d = {
            "seed": self.seed,
            "library_dir": self.library_dir,
            "manifest": self.manifest,
            "output_dir": self.output_dir,
            "augment": asdict(self.augment),
            "capture": asdict(self.capture),
            "synthesis": asdict(self.synthesis),
            "matcher": asdict(self.matcher),
        }
        if self.region_stats is not None:
            d["region_stats"] = {
                region.name.lower(): {
                    "probs": {k.value: p for k, p in dist.probs.items()},
                    "count_range": list(dist.count_range),
                }
                for region, dist in self.region_stats.regions.items()
            }
        else:
            d["region_stats"] = None
        return d


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


# --- subcommands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out or cfg.output_dir or "synth_out")
    library_dir = args.library or cfg.library_dir
    if library_dir is not None:
        library_path = Path(library_dir)
        if not library_path.exists():
            raise ConfigError(f"library path does not exist: {library_path}")
        library = load_library(library_path)
    else:
        library = default_library(seed=cfg.seed)

    stats = cfg.region_stats or default_region_stats()
    pop_cfg = PopulationConfig(synthesis=cfg.synthesis, capture=cfg.capture)
    views = args.views if args.views is not None else cfg.capture.views_per_id
    identities, rows = synthesize_population(
        n_ids=args.ids,
        views_per_id=views,
        stats=stats,
        library=library,
        cfg=pop_cfg,
        seed=cfg.seed,
        out_dir=out_dir,
    )
    snapshot = cfg.snapshot()
    snapshot["output_dir"] = str(out_dir)
    (out_dir / "config_snapshot.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True))
    print(f"wrote {len(identities)} identities / {len(rows)} manifest rows to {out_dir}")
    return 0


def cmd_augment(args) -> int:
    cfg = _load_config(args)
    patch_path = Path(args.patch)
    minutia_path = Path(args.minutia)
    for p in (patch_path, minutia_path):
        if not p.exists():
            raise ConfigError(f"input does not exist: {p}")
    patch = load_png(patch_path)
    minutia = minutia_from_dict(json.loads(minutia_path.read_text()))
    library = build_library([AnnotatedPatch(patch, minutia)], args.count, cfg.augment, cfg.seed)
    save_library(library, args.out)
    print(f"wrote {len(library)} variants to {args.out}")
    return 0


def cmd_encode(args) -> int:
    path = Path(args.annotation)
    if not path.exists():
        raise ConfigError(f"annotation file does not exist: {path}")
    data = json.loads(path.read_text())
    check_keys(data, ("side", "anchor_index", "ridge_counts", "minutiae"), f"annotation {path}")
    seq = AceSequence(
        minutiae=tuple(minutia_from_dict(m) for m in data["minutiae"]),
        ridge_counts=tuple(data["ridge_counts"]),
        anchor_index=int(data.get("anchor_index", 0)),
        side=Side(data.get("side", "L")),
    )
    print(encode(seq))
    print(render_prose(seq))
    return 0


def cmd_decode(args) -> int:
    seq = decode(args.text, side=Side(args.side))
    out = {
        "side": seq.side.value,
        "anchor_index": seq.anchor_index,
        "ridge_counts": list(seq.ridge_counts),
        "minutiae": [minutia_to_dict(m) for m in seq.minutiae],
    }
    print(json.dumps(out, indent=2))
    return 0


def cmd_match(args) -> int:
    cfg = _load_config(args)
    queries_rows = read_manifest(args.queries)
    gallery_rows = read_manifest(args.gallery)
    queries = [(r.id, decode(r.text, side=Side(r.side))) for r in queries_rows]
    gallery = []
    seen = set()
    for r in gallery_rows:
        if r.id not in seen:
            seen.add(r.id)
            gallery.append((r.id, decode(r.text, side=Side(r.side))))
    write_rankings(args.out, queries, gallery, k=args.k, weights=cfg.matcher)
    print(f"wrote {len(queries)} rankings to {args.out}")
    return 0


def cmd_eval(args) -> int:
    plan_path = Path(args.plan)
    if not plan_path.exists():
        raise ConfigError(f"plan file does not exist: {plan_path}")
    plan = ExperimentPlan.from_dict(json.loads(plan_path.read_text()), base_dir=plan_path.parent)
    sweeps = [s.strip() for s in args.sweeps.split(",") if s.strip()]
    unknown = set(sweeps) - {"injection", "ap", "cull"}
    if unknown:
        raise ConfigError(f"unknown sweep(s): {', '.join(sorted(unknown))}")

    if args.dry_run:
        for cell in plan_cells(plan, sweeps):
            print(cell)
        return 0

    tables = {}
    if "injection" in sweeps:
        tables["injection"] = run_injection_sweep(plan, jobs=args.jobs)
    if "ap" in sweeps:
        tables["ap_grid"] = run_ap_grid(plan, jobs=args.jobs)
    if "cull" in sweeps:
        tables["cull"] = run_cull_sweep(plan, jobs=args.jobs)
    run_dir = write_run(args.out, plan, tables)
    print(f"results written to {run_dir}")
    return 0


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stripekit",
        description="Stripe-pattern biometrics toolkit: synthesize, encode, match, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a virtual population with manifest")
    p.add_argument("--ids", type=int, required=True)
    p.add_argument("--views", type=int, default=None, help="views per id (config default: 12)")
    p.add_argument("--out", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--library", default=None, help="library directory (built-in if omitted)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="grow library variants from one annotated patch")
    p.add_argument("--patch", required=True)
    p.add_argument("--minutia", required=True)
    p.add_argument("--count", type=int, default=25)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("encode", help="encode an annotation file to descriptor text")
    p.add_argument("annotation")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode descriptor text to JSON")
    p.add_argument("text")
    p.add_argument("--side", default="L", choices=["L", "R"])
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("match", help="rank a gallery for every query row")
    p.add_argument("--queries", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-k", type=int, default=10)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("eval", help="run experiment sweeps from a plan file")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", default="eval_out")
    p.add_argument("--sweeps", default="injection,ap,cull")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ParseError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures surface the first pipeline error
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()

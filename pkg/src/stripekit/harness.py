"""Scripted evaluation protocols over dataset manifests.

Three sweeps drive the robustness experiments, all on the symbolic
matcher with the test queries held fixed:

  * injection — the gallery grows by batches of synthetic identities
    while queries stay real, measuring how enrollment scale moves
    retrieval metrics;
  * anchor-permutation grid — every query is expanded into several
    re-anchored descriptor variants (best variant scores), crossed with
    the injection steps;
  * culling — queries lose a growing fraction of minutiae over repeated
    seeds, tracing the degradation curve against an intact gallery.

Sweeps are bit-reproducible from (plan, seeds). Results land in a run
directory as self-describing CSV tables plus a config snapshot; known
published accuracy figures are carried alongside as overlay metadata
only, never asserted, since they come from trained encoder systems
rather than this symbolic matcher.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .codec import AceSequence, Side, cull, decode, permute_anchor
from .manifest import ManifestRow, distinct_ids, read_manifest
from .matching import CmcResult, CostWeights, distance_matrix, evaluate_cmc
from .util import ConfigError, check_keys


class InsufficientSyntheticPool(ValueError):
    pass


class OverlappingSplits(ValueError):
    pass


#: Externally reported accuracy reference points, kept for plot overlays.
#: They characterize trained encoder systems, not this toolkit's matcher,
#: and are never asserted by any test here.
REFERENCE_POINTS = {
    "text_only_top1": 0.998,
    "image_only_top1": 0.892,
    "multimodal_top1": 0.993,
    "cross_modal_base_top1": 0.216,
    "cross_modal_peak_top1": 0.418,
    "cross_modal_peak_synthetic_ids": 1000,
    "anchor_permutation_best_top1": 0.488,
    "anchor_permutation_best_setting": 6,
    "cull_endpoint_top1": 0.044,
}


# --- dataset splitting ---------------------------------------------------------


def split_dataset(
    rows: list[ManifestRow],
    train_ids: int | list[str],
    test_ids: int | list[str],
    seed=None,
) -> list[ManifestRow]:
    """Assign every row's split by identity; no id ever spans splits.

    ``train_ids``/``test_ids`` are either explicit id lists (validated
    disjoint) or counts drawn by random assignment with the given seed.
    Returns new rows in the original order with split set to "train" or
    "test".
    """
    ids = distinct_ids(rows)
    if isinstance(train_ids, int) != isinstance(test_ids, int):
        raise ValueError("train_ids and test_ids must both be counts or both be id lists")
    if isinstance(train_ids, int) and isinstance(test_ids, int):
        if train_ids + test_ids > len(ids):
            raise ValueError(
                f"requested {train_ids}+{test_ids} ids but manifest has {len(ids)}"
            )
        rng = np.random.default_rng(seed)
        order = [ids[i] for i in rng.permutation(len(ids))]
        train_set = set(order[:train_ids])
        test_set = set(order[train_ids : train_ids + test_ids])
    else:
        train_set = set(train_ids)
        test_set = set(test_ids)
        overlap = train_set & test_set
        if overlap:
            raise OverlappingSplits(f"ids in both splits: {sorted(overlap)[:5]}")
        unknown = (train_set | test_set) - set(ids)
        if unknown:
            raise ValueError(f"split ids missing from manifest: {sorted(unknown)[:5]}")

    out = []
    for row in rows:
        if row.id in train_set:
            split = "train"
        elif row.id in test_set:
            split = "test"
        else:
            split = row.split
        out.append(
            ManifestRow(
                image_path=row.image_path,
                text=row.text,
                id=row.id,
                side=row.side,
                split=split,
                view_index=row.view_index,
                capture=row.capture,
            )
        )
    return out


# --- manifest -> matcher inputs ---------------------------------------------------


def gallery_from_rows(rows: list[ManifestRow]) -> list[tuple[str, AceSequence]]:
    """One enrolled sequence per identity (its first manifest row)."""
    gallery = []
    seen = set()
    for row in rows:
        if row.id in seen:
            continue
        seen.add(row.id)
        gallery.append((row.id, decode(row.text, side=Side(row.side))))
    return gallery


def queries_from_rows(
    rows: list[ManifestRow], split: str = "test"
) -> list[tuple[str, AceSequence]]:
    """All rows of a split as (id, sequence) queries."""
    return [
        (row.id, decode(row.text, side=Side(row.side))) for row in rows if row.split == split
    ]


# --- experiment plan ----------------------------------------------------------------


@dataclass
class ExperimentPlan:
    """Everything a sweep needs: data, grids, seeds, matcher settings."""

    base_rows: list[ManifestRow]
    synthetic_rows: list[ManifestRow] = field(default_factory=list)
    injection_steps: list[int] = field(default_factory=lambda: [200 * i for i in range(11)])
    ap_settings: list[int] = field(default_factory=lambda: list(range(1, 9)))
    cull_fractions: list[float] = field(default_factory=lambda: [i / 10 for i in range(10)])
    seeds: list[int] = field(default_factory=lambda: list(range(20)))
    window: int = 7
    weights: CostWeights = field(default_factory=CostWeights)
    query_split: str = "test"
    base_manifest_path: str | None = None
    synthetic_manifest_path: str | None = None

    def __post_init__(self) -> None:
        steps = self.injection_steps
        if any(s < 0 for s in steps) or any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("injection steps must be non-negative and strictly increasing")
        if any(not 0.0 <= f < 1.0 for f in self.cull_fractions):
            raise ValueError("cull fractions must lie in [0, 1)")
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if any(ap < 1 for ap in self.ap_settings):
            raise ValueError("anchor settings must be positive")
        if self.ap_settings and max(self.ap_settings) > 2 * self.window + 1:
            raise ValueError(
                f"anchor setting {max(self.ap_settings)} exceeds the window capacity "
                f"of {2 * self.window + 1}"
            )

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentPlan":
        allowed = (
            "base_manifest",
            "synthetic_manifest",
            "injection_steps",
            "ap_settings",
            "cull_fractions",
            "seeds",
            "window",
            "weights",
            "query_split",
        )
        check_keys(d, allowed, "experiment plan")
        if "base_manifest" not in d:
            raise ConfigError("experiment plan needs a base_manifest path")
        base_dir = base_dir or Path(".")

        def resolve(p):
            path = Path(p)
            return path if path.is_absolute() else base_dir / path

        base_path = resolve(d["base_manifest"])
        base_rows = read_manifest(base_path)
        synthetic_rows: list[ManifestRow] = []
        synth_path = None
        if d.get("synthetic_manifest"):
            synth_path = resolve(d["synthetic_manifest"])
            synthetic_rows = read_manifest(synth_path)
        kwargs = {}
        for key in ("injection_steps", "ap_settings", "cull_fractions", "seeds", "window", "query_split"):
            if key in d:
                kwargs[key] = d[key]
        if "weights" in d:
            kwargs["weights"] = CostWeights.from_dict(d["weights"])
        return cls(
            base_rows=base_rows,
            synthetic_rows=synthetic_rows,
            base_manifest_path=str(base_path),
            synthetic_manifest_path=str(synth_path) if synth_path else None,
            **kwargs,
        )

    def snapshot(self) -> dict:
        """Config echo for the run directory; rerunning it reproduces outputs."""
        return {
            "base_manifest": self.base_manifest_path,
            "synthetic_manifest": self.synthetic_manifest_path,
            "base_rows": len(self.base_rows),
            "synthetic_rows": len(self.synthetic_rows),
            "injection_steps": self.injection_steps,
            "ap_settings": self.ap_settings,
            "cull_fractions": self.cull_fractions,
            "seeds": self.seeds,
            "window": self.window,
            "weights": asdict(self.weights),
            "query_split": self.query_split,
        }


def _injection_galleries(plan: ExperimentPlan):
    """Base gallery plus the synthetic enrollment pool, validated."""
    base_gallery = gallery_from_rows(plan.base_rows)
    pool = gallery_from_rows(plan.synthetic_rows)
    base_ids = {gid for gid, _ in base_gallery}
    pool_ids = {gid for gid, _ in pool}
    clash = base_ids & pool_ids
    if clash:
        raise ValueError(f"synthetic ids collide with base ids: {sorted(clash)[:5]}")
    largest = max(plan.injection_steps, default=0)
    if largest > len(pool):
        raise InsufficientSyntheticPool(
            f"largest injection step {largest} exceeds the synthetic pool of {len(pool)}"
        )
    return base_gallery, pool


def _run_cells(cells, worker, jobs: int):
    """Run independent sweep cells through a bounded worker pool."""
    if jobs <= 1 or len(cells) <= 1:
        return [worker(cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, cells))


# --- sweeps -----------------------------------------------------------------------


def run_injection_sweep(plan: ExperimentPlan, jobs: int = 1) -> list[dict]:
    """Grow the gallery by synthetic-id batches with queries fixed."""
    queries = queries_from_rows(plan.base_rows, plan.query_split)
    base_gallery, pool = _injection_galleries(plan)

    def cell(step: int) -> dict:
        gallery = base_gallery + pool[:step]
        res = evaluate_cmc(queries, gallery, plan.weights)
        return {
            "step": step,
            "gallery_size": len(gallery),
            "top1": res.top1,
            "top5": res.top5,
        }

    return _run_cells(plan.injection_steps, cell, jobs)


def _min_variant_cmc(
    queries: list[tuple[str, AceSequence]],
    gallery: list[tuple[str, AceSequence]],
    ap: int,
    window: int,
    seed: int,
    weights: CostWeights,
) -> CmcResult:
    """CMC where each query scores as the best of its anchor variants."""
    root = np.random.SeedSequence([seed, ap])
    children = root.spawn(len(queries))
    variants: list[AceSequence] = []
    blocks: list[tuple[int, int]] = []
    for (qid, seq), child in zip(queries, children):
        w = min(window, len(seq) - 1)
        vs = permute_anchor(seq, ap, w, child)
        blocks.append((len(variants), len(variants) + len(vs)))
        variants.extend(vs)
    dm = distance_matrix(variants, [s for _, s in gallery], weights)
    reduced = np.stack([dm[a:b].min(axis=0) for a, b in blocks])
    return evaluate_cmc(queries, gallery, weights, precomputed=reduced)


def run_ap_grid(plan: ExperimentPlan, jobs: int = 1) -> list[dict]:
    """Full anchor-permutation x injection-step grid of accuracies."""
    queries = queries_from_rows(plan.base_rows, plan.query_split)
    base_gallery, pool = _injection_galleries(plan)
    seed = plan.seeds[0]

    cells = [(ap, step) for ap in plan.ap_settings for step in plan.injection_steps]

    def cell(args) -> dict:
        ap, step = args
        gallery = base_gallery + pool[:step]
        res = _min_variant_cmc(queries, gallery, ap, plan.window, seed, plan.weights)
        return {
            "ap": ap,
            "step": step,
            "gallery_size": len(gallery),
            "top1": res.top1,
            "top5": res.top5,
        }

    return _run_cells(cells, cell, jobs)


def run_cull_sweep(plan: ExperimentPlan, jobs: int = 1) -> list[dict]:
    """Degrade queries by minutiae culling against the intact gallery."""
    queries = queries_from_rows(plan.base_rows, plan.query_split)
    gallery = gallery_from_rows(plan.base_rows)

    cells = [(f, s) for f in plan.cull_fractions for s in plan.seeds]

    def cell(args) -> tuple:
        fraction, seed = args
        children = np.random.SeedSequence([seed, int(fraction * 1000)]).spawn(len(queries))
        culled = [
            (qid, cull(seq, fraction, child)) for (qid, seq), child in zip(queries, children)
        ]
        res = evaluate_cmc(culled, gallery, plan.weights)
        return (fraction, res.top1, res.top5)

    outcomes = _run_cells(cells, cell, jobs)
    rows = []
    for fraction in plan.cull_fractions:
        t1 = [o[1] for o in outcomes if o[0] == fraction]
        t5 = [o[2] for o in outcomes if o[0] == fraction]
        rows.append(
            {
                "fraction": fraction,
                "n_seeds": len(t1),
                "mean_top1": float(np.mean(t1)),
                "std_top1": float(np.std(t1)),
                "mean_top5": float(np.mean(t5)),
                "std_top5": float(np.std(t5)),
            }
        )
    return rows


# --- result output -------------------------------------------------------------------


def write_table(path: str | Path, rows: list[dict]) -> None:
    """CSV with a header naming every varied knob."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def write_run(
    run_dir: str | Path, plan: ExperimentPlan, tables: dict[str, list[dict]]
) -> Path:
    """Persist sweep tables plus the plan snapshot and overlay metadata."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "plan.json").write_text(json.dumps(plan.snapshot(), indent=2, sort_keys=True))
    (run_dir / "meta.json").write_text(
        json.dumps({"reference_points": REFERENCE_POINTS}, indent=2, sort_keys=True)
    )
    for name, rows in tables.items():
        write_table(run_dir / f"{name}.csv", rows)
    return run_dir


def plan_cells(plan: ExperimentPlan, sweeps: list[str]) -> list[str]:
    """Human-readable cell grid, used by dry runs."""
    cells = []
    if "injection" in sweeps:
        cells += [f"injection step={s}" for s in plan.injection_steps]
    if "ap" in sweeps:
        cells += [
            f"ap={ap} step={s}" for ap in plan.ap_settings for s in plan.injection_steps
        ]
    if "cull" in sweeps:
        cells += [
            f"cull fraction={f} seed={s}" for f in plan.cull_fractions for s in plan.seeds
        ]
    return cells

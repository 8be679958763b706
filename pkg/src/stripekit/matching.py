"""Deterministic similarity between minutiae sequences and gallery retrieval.

Two descriptors are compared with a cyclic, anchor-invariant edit
distance over minutia tokens: the minimum over rotations of the shorter
sequence of a weighted edit distance whose substitution cost combines a
flat kind-mismatch penalty with scaled ridge-count and (circular)
angle-bucket differences. Distance zero means the descriptors are
cyclically identical at token granularity.

Single-pair queries run in pure Python and return an aligned-pair trace;
bulk query-gallery matrices go through a compiled kernel so degradation
and injection sweeps stay fast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .codec import ANGLE_BUCKETS, AceSequence, EmptySequence, angle_bucket
from .minutiae import MinutiaKind
from .util import check_keys

_KIND_IDS = {kind: i for i, kind in enumerate(MinutiaKind)}


class EmptyGallery(ValueError):
    pass


class UnknownQueryId(KeyError):
    pass


@dataclass(frozen=True)
class CostWeights:
    """Edit costs; defaults keep kind identity dominant."""

    kind: float = 1.0
    rc: float = 0.1
    angle: float = 0.05
    indel: float = 1.0

    @classmethod
    def from_dict(cls, d: dict) -> "CostWeights":
        check_keys(d, cls.__dataclass_fields__, "matcher weights")
        return cls(**d)


@dataclass(frozen=True)
class SequenceDistance:
    """Distance value plus the aligned-pair trace of the best alignment.

    ``pairs`` holds (i, j) index pairs into the two sequences' storage
    order; a None member marks an insertion or deletion.
    """

    cost: float
    pairs: tuple[tuple[int | None, int | None], ...]


def _token_arrays(seq: AceSequence) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    kinds = np.array([_KIND_IDS[m.kind] for m in seq.minutiae], dtype=np.int64)
    rcs = np.array(seq.ridge_counts, dtype=np.int64)
    buckets = np.array(
        [angle_bucket(m.orientation_deg) - 1 for m in seq.minutiae], dtype=np.int64
    )
    return kinds, rcs, buckets


def _sub_cost(ta, tb, w: CostWeights) -> float:
    kind_a, rc_a, bucket_a = ta
    kind_b, rc_b, bucket_b = tb
    db = abs(bucket_a - bucket_b)
    db = min(db, ANGLE_BUCKETS - db)
    return (
        w.kind * (kind_a != kind_b) + w.rc * abs(rc_a - rc_b) + w.angle * db
    )


def _edit_with_trace(tokens_a, tokens_b, w: CostWeights):
    """Plain edit distance with backtracking; reference implementation."""
    n, m = len(tokens_a), len(tokens_b)
    dp = np.zeros((n + 1, m + 1))
    dp[:, 0] = np.arange(n + 1) * w.indel
    dp[0, :] = np.arange(m + 1) * w.indel
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            dp[i, j] = min(
                dp[i - 1, j - 1] + _sub_cost(tokens_a[i - 1], tokens_b[j - 1], w),
                dp[i - 1, j] + w.indel,
                dp[i, j - 1] + w.indel,
            )
    pairs: list[tuple[int | None, int | None]] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and np.isclose(
            dp[i, j], dp[i - 1, j - 1] + _sub_cost(tokens_a[i - 1], tokens_b[j - 1], w)
        ):
            pairs.append((i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and np.isclose(dp[i, j], dp[i - 1, j] + w.indel):
            pairs.append((i - 1, None))
            i -= 1
        else:
            pairs.append((None, j - 1))
            j -= 1
    pairs.reverse()
    return float(dp[n, m]), pairs


def sequence_distance(
    a: AceSequence, b: AceSequence, weights: CostWeights | None = None
) -> SequenceDistance:
    """Anchor-invariant distance between two sequences, with trace.

    Minimizes a token edit distance over cyclic rotations of the shorter
    sequence (both, when lengths tie, which makes symmetry exact by
    construction). Trace indices refer to the sequences' storage order.
    """
    if len(a) == 0 or len(b) == 0:
        raise EmptySequence("sequences must be non-empty")
    w = weights or CostWeights()
    ta = list(zip(*(arr.tolist() for arr in _token_arrays(a))))
    tb = list(zip(*(arr.tolist() for arr in _token_arrays(b))))

    best_cost = np.inf
    best_pairs: tuple = ()
    if len(ta) <= len(tb):
        for r in range(len(ta)):
            rotated = ta[r:] + ta[:r]
            cost, pairs = _edit_with_trace(rotated, tb, w)
            if cost < best_cost - 1e-12:
                best_cost = cost
                best_pairs = tuple(
                    ((i + r) % len(ta) if i is not None else None, j) for i, j in pairs
                )
    if len(tb) <= len(ta):
        for r in range(len(tb)):
            rotated = tb[r:] + tb[:r]
            cost, pairs = _edit_with_trace(ta, rotated, w)
            if cost < best_cost - 1e-12:
                best_cost = cost
                best_pairs = tuple(
                    (i, (j + r) % len(tb) if j is not None else None) for i, j in pairs
                )
    return SequenceDistance(cost=float(best_cost), pairs=best_pairs)


# --- compiled bulk kernel ------------------------------------------------------


@njit(cache=True, nogil=True)
def _edit_rotations(ka, ra, ba, kb, rb, bb, kind_w, rc_w, angle_w, indel_w, best):
    """Min over rotations of the second token array of the edit distance.

    ``best`` seeds the incumbent for early abandoning: every alignment
    path crosses every DP row, so a row minimum at or above the incumbent
    ends that rotation.
    """
    n = ka.shape[0]
    m = kb.shape[0]
    prev = np.empty(m + 1, dtype=np.float64)
    cur = np.empty(m + 1, dtype=np.float64)
    rkb = np.empty(m, dtype=np.int64)
    rrb = np.empty(m, dtype=np.int64)
    rbb = np.empty(m, dtype=np.int64)
    for r in range(m):
        for j in range(m):
            jj = j + r
            if jj >= m:
                jj -= m
            rkb[j] = kb[jj]
            rrb[j] = rb[jj]
            rbb[j] = bb[jj]
        for j in range(m + 1):
            prev[j] = j * indel_w
        abandoned = False
        for i in range(1, n + 1):
            cur[0] = i * indel_w
            row_min = cur[0]
            kai = ka[i - 1]
            rai = ra[i - 1]
            bai = ba[i - 1]
            for j in range(1, m + 1):
                sub = 0.0
                if kai != rkb[j - 1]:
                    sub += kind_w
                dr = rai - rrb[j - 1]
                if dr < 0:
                    dr = -dr
                sub += rc_w * dr
                db = bai - rbb[j - 1]
                if db < 0:
                    db = -db
                if db > ANGLE_BUCKETS - db:
                    db = ANGLE_BUCKETS - db
                sub += angle_w * db
                c = prev[j - 1] + sub
                c2 = prev[j] + indel_w
                if c2 < c:
                    c = c2
                c3 = cur[j - 1] + indel_w
                if c3 < c:
                    c = c3
                cur[j] = c
                if c < row_min:
                    row_min = c
            if row_min >= best:
                abandoned = True
                break
            tmp = prev
            prev = cur
            cur = tmp
        if not abandoned and prev[m] < best:
            best = prev[m]
    return best


@njit(cache=True, nogil=True)
def _pair_distance(ka, ra, ba, kb, rb, bb, kind_w, rc_w, angle_w, indel_w):
    if ka.shape[0] == kb.shape[0]:
        d = _edit_rotations(ka, ra, ba, kb, rb, bb, kind_w, rc_w, angle_w, indel_w, np.inf)
        return _edit_rotations(kb, rb, bb, ka, ra, ba, kind_w, rc_w, angle_w, indel_w, d)
    if kb.shape[0] < ka.shape[0]:
        return _edit_rotations(ka, ra, ba, kb, rb, bb, kind_w, rc_w, angle_w, indel_w, np.inf)
    return _edit_rotations(kb, rb, bb, ka, ra, ba, kind_w, rc_w, angle_w, indel_w, np.inf)


@njit(cache=True, nogil=True)
def _distance_matrix_kernel(
    qk, qr, qb, qlen, gk, gr, gb, glen, kind_w, rc_w, angle_w, indel_w
):
    nq = qk.shape[0]
    ng = gk.shape[0]
    out = np.empty((nq, ng), dtype=np.float64)
    for qi in range(nq):
        for gi in range(ng):
            out[qi, gi] = _pair_distance(
                qk[qi, : qlen[qi]],
                qr[qi, : qlen[qi]],
                qb[qi, : qlen[qi]],
                gk[gi, : glen[gi]],
                gr[gi, : glen[gi]],
                gb[gi, : glen[gi]],
                kind_w,
                rc_w,
                angle_w,
                indel_w,
            )
    return out


def _pack(seqs: list[AceSequence]):
    if not seqs:
        raise EmptySequence("no sequences to pack")
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    lmax = int(lengths.max())
    kinds = np.zeros((len(seqs), lmax), dtype=np.int64)
    rcs = np.zeros((len(seqs), lmax), dtype=np.int64)
    buckets = np.zeros((len(seqs), lmax), dtype=np.int64)
    for i, s in enumerate(seqs):
        k, r, b = _token_arrays(s)
        kinds[i, : len(s)] = k
        rcs[i, : len(s)] = r
        buckets[i, : len(s)] = b
    return kinds, rcs, buckets, lengths


def distance_matrix(
    queries: list[AceSequence], gallery: list[AceSequence], weights: CostWeights | None = None
) -> np.ndarray:
    """All pairwise query-gallery distances via the compiled kernel."""
    w = weights or CostWeights()
    qk, qr, qb, qlen = _pack(queries)
    gk, gr, gb, glen = _pack(gallery)
    return _distance_matrix_kernel(
        qk, qr, qb, qlen, gk, gr, gb, glen, w.kind, w.rc, w.angle, w.indel
    )


# --- retrieval and CMC evaluation ------------------------------------------------


def _ranked_order(dist_row: np.ndarray, ids: list[str]) -> list[int]:
    """Indices sorted by ascending distance, ties broken by id order."""
    return sorted(range(len(ids)), key=lambda i: (dist_row[i], ids[i]))


def retrieve(
    query: AceSequence,
    gallery: list[tuple[str, AceSequence]],
    k: int = 5,
    weights: CostWeights | None = None,
) -> list[tuple[str, float]]:
    """Top-k gallery identities for one query, nearest first."""
    if not gallery:
        raise EmptyGallery("gallery must be non-empty")
    ids = [gid for gid, _ in gallery]
    dists = distance_matrix([query], [seq for _, seq in gallery], weights)[0]
    order = _ranked_order(dists, ids)
    return [(ids[i], float(dists[i])) for i in order[:k]]


@dataclass
class CmcResult:
    """Cumulative match characteristic over a query set."""

    top1: float
    top5: float
    curve: np.ndarray  # curve[r] = P(true id within first r+1 ranked ids)
    ranks: np.ndarray  # 1-based best rank of the true id, per query


def evaluate_cmc(
    queries: list[tuple[str, AceSequence]],
    gallery: list[tuple[str, AceSequence]],
    weights: CostWeights | None = None,
    precomputed: np.ndarray | None = None,
) -> CmcResult:
    """Rank every query against the gallery and accumulate the CMC curve.

    Ranking is over distinct gallery identities (the best-scoring entry
    represents its id when an id has several). Every query id must be
    enrolled in the gallery.
    """
    if not gallery:
        raise EmptyGallery("gallery must be non-empty")
    gallery_ids = [gid for gid, _ in gallery]
    id_set = set(gallery_ids)
    for qid, _ in queries:
        if qid not in id_set:
            raise UnknownQueryId(f"query id {qid!r} is not enrolled in the gallery")

    if precomputed is None:
        dists = distance_matrix(
            [seq for _, seq in queries], [seq for _, seq in gallery], weights
        )
    else:
        dists = precomputed

    n_ids = len(id_set)
    ranks = np.empty(len(queries), dtype=np.int64)
    for qi, (qid, _) in enumerate(queries):
        order = _ranked_order(dists[qi], gallery_ids)
        seen: set[str] = set()
        rank = 0
        for gi in order:
            gid = gallery_ids[gi]
            if gid in seen:
                continue
            seen.add(gid)
            rank += 1
            if gid == qid:
                break
        ranks[qi] = rank

    curve = np.array([(ranks <= r + 1).mean() for r in range(n_ids)])
    top1 = float(curve[0])
    top5 = float(curve[min(4, n_ids - 1)])
    return CmcResult(top1=top1, top5=top5, curve=curve, ranks=ranks)


def write_rankings(path, queries, gallery, k=10, weights=None) -> None:
    """Dump per-query rankings as JSON-lines {query_id, ranked_ids, distances}."""
    import json
    from pathlib import Path

    if not gallery:
        raise EmptyGallery("gallery must be non-empty")
    ids = [gid for gid, _ in gallery]
    dists = distance_matrix([s for _, s in queries], [s for _, s in gallery], weights)
    with Path(path).open("w") as fh:
        for qi, (qid, _) in enumerate(queries):
            order = _ranked_order(dists[qi], ids)[:k]
            fh.write(
                json.dumps(
                    {
                        "query_id": qid,
                        "ranked_ids": [ids[i] for i in order],
                        "distances": [float(dists[qi][i]) for i in order],
                    }
                )
                + "\n"
            )

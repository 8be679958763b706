"""Sequence encoding of minutiae along the anatomical scan path.

A coat side's minutiae, ordered along the scan trajectory (fore to hind
band, closing cyclically), are rendered into a compact token string:

    token     := KIND RC ANGLE REGION
    KIND      := "R" | "B" | "C" | "E"
    RC        := decimal ridge count (plain stripes crossed since the
                 previous minutia on the path)
    ANGLE     := "a1" .. "a8"   (orientation quantized into 45-degree
                 buckets, bucket 1 = [0, 45))
    REGION    := "F" | "M" | "H"
    text      := token (";" token)*

Encoding starts at the sequence's anchor minutia and wraps cyclically;
the token string is the wire format carried in dataset manifests. A
one-way prose rendering is provided for human checking. Anchor
permutation and minutiae culling, the two descriptor perturbations used
in robustness experiments, live here as pure seeded operations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from .minutiae import (
    DEFAULT_REGION_LABELS,
    Minutia,
    MinutiaKind,
    RegionId,
    canonical_minutia,
)
from .util import as_rng

#: Hard cap on minutia tokens per descriptor, matching the downstream
#: text-embedding budget the wire format must fit into.
MAX_TOKENS = 77

ANGLE_BUCKETS = 8
_BUCKET_WIDTH = 360.0 / ANGLE_BUCKETS


class Side(Enum):
    LEFT = "L"
    RIGHT = "R"

    @classmethod
    def from_letter(cls, letter: str) -> "Side":
        return cls(letter)


class EmptySequence(ValueError):
    pass


class WouldEmptySequence(ValueError):
    pass


class TokenBudgetExceeded(ValueError):
    pass


class ParseError(ValueError):
    """Descriptor text rejected; carries the byte offset and expectation."""

    def __init__(self, offset: int, expected: tuple[str, ...], found: str):
        self.offset = offset
        self.expected = expected
        self.found = found
        super().__init__(
            f"parse error at offset {offset}: expected {' | '.join(expected)}, found {found!r}"
        )


@dataclass(frozen=True)
class AceSequence:
    """Minutiae in scan-path order with their topological spacing.

    ``ridge_counts[i]`` is the number of plain stripes crossed between
    minutia ``i-1`` (cyclically) and minutia ``i``; ``anchor_index`` is
    where the textual rendering begins. Side is carried alongside (the
    two flanks of one animal are distinct identities) but does not enter
    the token string; it travels in manifest records.
    """

    minutiae: tuple[Minutia, ...]
    ridge_counts: tuple[int, ...]
    anchor_index: int = 0
    side: Side = Side.LEFT

    def __post_init__(self) -> None:
        object.__setattr__(self, "minutiae", tuple(self.minutiae))
        object.__setattr__(self, "ridge_counts", tuple(int(rc) for rc in self.ridge_counts))
        if len(self.minutiae) == 0:
            raise EmptySequence("a sequence needs at least one minutia")
        if len(self.ridge_counts) != len(self.minutiae):
            raise ValueError(
                f"ridge_counts length {len(self.ridge_counts)} != "
                f"minutiae length {len(self.minutiae)}"
            )
        if any(rc < 0 for rc in self.ridge_counts):
            raise ValueError("ridge counts must be non-negative")
        if not 0 <= self.anchor_index < len(self.minutiae):
            raise ValueError(f"anchor_index {self.anchor_index} out of range")

    def __len__(self) -> int:
        return len(self.minutiae)


def angle_bucket(orientation_deg: float) -> int:
    """Quantize an orientation in [0, 360) into buckets 1..8."""
    return int((orientation_deg % 360.0) // _BUCKET_WIDTH) + 1


def bucket_center_deg(bucket: int) -> float:
    return (bucket - 0.5) * _BUCKET_WIDTH


def token_view(seq: AceSequence) -> list[tuple[str, int, int, str]]:
    """Descriptor-level content in storage order: (kind, rc, bucket, region).

    This is the granularity the token grammar preserves; keypoint
    geometry and exact angles are not part of the wire format.
    """
    return [
        (m.kind.letter, rc, angle_bucket(m.orientation_deg), m.region.letter)
        for m, rc in zip(seq.minutiae, seq.ridge_counts)
    ]


def sequences_equivalent(a: AceSequence, b: AceSequence) -> bool:
    """True when token views match up to a cyclic rotation."""
    ta, tb = token_view(a), token_view(b)
    if len(ta) != len(tb):
        return False
    return any(tb[r:] + tb[:r] == ta for r in range(len(tb)))


def regions_in_scan_order(seq: AceSequence) -> bool:
    """Check that each region forms one contiguous cyclic run, in scan order.

    Up to rotation, the region string must match F* M* H*; this holds for
    synthesized sequences and is preserved by rotation, culling, and
    degradation.
    """
    letters = [m.region.letter for m in seq.minutiae]
    n = len(letters)
    # rotate so the sequence starts at a region-run boundary
    order = "FMH"
    for r in range(n):
        rotated = letters[r:] + letters[:r]
        pos = 0
        ok = True
        for letter in rotated:
            while pos < 3 and order[pos] != letter:
                pos += 1
            if pos == 3:
                ok = False
                break
        if ok:
            return True
    return False


# --- encode / decode --------------------------------------------------------


def encode(seq: AceSequence) -> str:
    """Render a sequence into its canonical token string.

    Emission starts at the anchor minutia and wraps cyclically, one token
    per minutia. Deterministic; raises TokenBudgetExceeded beyond
    MAX_TOKENS minutiae.
    """
    if len(seq) > MAX_TOKENS:
        raise TokenBudgetExceeded(f"{len(seq)} tokens exceed the budget of {MAX_TOKENS}")
    view = token_view(seq)
    a = seq.anchor_index
    rotated = view[a:] + view[:a]
    return ";".join(f"{kind}{rc}a{bucket}{region}" for kind, rc, bucket, region in rotated)


_KIND_LETTERS = ("R", "B", "C", "E")
_REGION_LETTERS = ("F", "M", "H")


def decode(text: str, side: Side = Side.LEFT) -> AceSequence:
    """Parse a token string back into a sequence.

    The result is anchored at index 0 (the text's first token) and its
    minutiae carry canonical template geometry: the grammar transmits
    kind, ridge count, orientation bucket, and region only. Orientation
    is reconstructed at the bucket center. Side is not part of the
    grammar and must be supplied by the caller (manifests carry it).
    """
    if text == "":
        raise ParseError(0, _KIND_LETTERS, "end of input")

    minutiae: list[Minutia] = []
    ridge_counts: list[int] = []
    i = 0
    n = len(text)
    while True:
        # kind letter
        if i >= n or text[i] not in _KIND_LETTERS:
            raise ParseError(i, _KIND_LETTERS, text[i] if i < n else "end of input")
        kind = MinutiaKind.from_letter(text[i])
        i += 1
        # ridge count: one or more digits
        start = i
        while i < n and text[i].isdigit():
            i += 1
        if i == start:
            raise ParseError(i, ("digit",), text[i] if i < n else "end of input")
        rc = int(text[start:i])
        # angle bucket: "a" then 1..8
        if i >= n or text[i] != "a":
            raise ParseError(i, ("a",), text[i] if i < n else "end of input")
        i += 1
        if i >= n or text[i] not in "12345678":
            raise ParseError(i, ("1-8",), text[i] if i < n else "end of input")
        bucket = int(text[i])
        i += 1
        # region letter
        if i >= n or text[i] not in _REGION_LETTERS:
            raise ParseError(i, _REGION_LETTERS, text[i] if i < n else "end of input")
        region = RegionId.from_letter(text[i])
        i += 1

        minutiae.append(canonical_minutia(kind, bucket_center_deg(bucket), region))
        ridge_counts.append(rc)

        if i == n:
            break
        if text[i] != ";":
            raise ParseError(i, (";", "end of input"), text[i])
        i += 1

    if len(minutiae) > MAX_TOKENS:
        raise TokenBudgetExceeded(f"{len(minutiae)} tokens exceed the budget of {MAX_TOKENS}")
    return AceSequence(tuple(minutiae), tuple(ridge_counts), anchor_index=0, side=side)


def render_prose(
    seq: AceSequence, region_labels: dict[RegionId, str] | None = None
) -> str:
    """One-way human-readable rendering, one clause per minutia.

    Clauses follow encoding order (anchored, cyclic). No parser exists
    for this form; the token string is the machine format.
    """
    labels = region_labels or DEFAULT_REGION_LABELS
    a = seq.anchor_index
    order = list(range(a, len(seq))) + list(range(a))
    clauses = []
    for idx in order:
        m = seq.minutiae[idx]
        rc = seq.ridge_counts[idx]
        kind_name = m.kind.value.lower()
        region_name = labels[m.region]
        if rc == 0:
            clauses.append(f"a {kind_name} in the {region_name} region")
        else:
            unit = "ridge" if rc == 1 else "ridges"
            clauses.append(f"after {rc} {unit}, a {kind_name} in the {region_name} region")
    return "; ".join(clauses)


# --- anchor permutation and culling -----------------------------------------


def permute_anchor(seq: AceSequence, k: int, window: int, seed=None) -> list[AceSequence]:
    """Re-anchored variants of a sequence for anchor-robustness training.

    Candidate anchors are the cyclic index window
    {anchor - window, ..., anchor + window}; the original anchoring is
    always returned first and the remaining variants are drawn without
    replacement, so the result holds min(k, |window set|) sequences.
    Deterministic for a given seed.
    """
    n = len(seq)
    if n == 0:
        raise EmptySequence("cannot permute an empty sequence")
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if window < 0:
        raise ValueError(f"window must be non-negative, got {window}")
    if window >= n:
        raise ValueError(f"window {window} must be smaller than sequence length {n}")

    candidates: list[int] = []
    seen = set()
    for off in range(-window, window + 1):
        idx = (seq.anchor_index + off) % n
        if idx not in seen:
            seen.add(idx)
            candidates.append(idx)

    rng = as_rng(seed)
    others = [idx for idx in candidates if idx != seq.anchor_index]
    take = min(k, len(candidates))
    picked = [seq.anchor_index]
    if take > 1:
        order = rng.permutation(len(others))
        picked.extend(others[i] for i in order[: take - 1])
    return [replace(seq, anchor_index=idx) for idx in picked]


def cull(seq: AceSequence, fraction: float, seed=None) -> AceSequence:
    """Randomly remove a fraction of minutiae, keeping ridge counts coherent.

    floor(fraction * len) minutiae are chosen uniformly without
    replacement. Each removal folds the victim's ridge count into its
    cyclic successor, plus one if the victim was itself a ridge (the
    stripe stays in the coat, it just loses its labelled structure), so
    the quantity sum(ridge_counts) + #ridges is conserved per removal.
    The anchor is re-mapped to the nearest surviving minutia.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"fraction must lie in [0, 1), got {fraction}")
    n = len(seq)
    n_remove = int(fraction * n)
    if n_remove >= n:
        raise WouldEmptySequence("culling would remove every minutia")
    if n_remove == 0:
        return seq

    rng = as_rng(seed)
    removed = set(rng.choice(n, size=n_remove, replace=False).tolist())

    minutiae = list(seq.minutiae)
    counts = list(seq.ridge_counts)
    for victim in sorted(removed):
        folded = counts[victim] + (1 if minutiae[victim].kind is MinutiaKind.RIDGE else 0)
        # cyclic successor among the survivors; skipping other victims here
        # is equivalent to removing them one at a time with cascading folds
        succ = (victim + 1) % n
        while succ in removed:
            succ = (succ + 1) % n
        counts[succ] += folded

    # nearest surviving anchor, forward direction preferred on ties
    anchor = seq.anchor_index
    new_anchor_old_idx = anchor
    if anchor in removed:
        for d in range(1, n):
            fwd = (anchor + d) % n
            if fwd not in removed:
                new_anchor_old_idx = fwd
                break
            back = (anchor - d) % n
            if back not in removed:
                new_anchor_old_idx = back
                break

    survivors = [i for i in range(n) if i not in removed]
    new_minutiae = tuple(minutiae[i] for i in survivors)
    new_counts = tuple(counts[i] for i in survivors)
    new_anchor = survivors.index(new_anchor_old_idx)
    return AceSequence(new_minutiae, new_counts, anchor_index=new_anchor, side=seq.side)


def fold_invariant(seq: AceSequence) -> int:
    """Conserved culling quantity: total ridge counts plus ridge minutiae."""
    n_ridges = sum(1 for m in seq.minutiae if m.kind is MinutiaKind.RIDGE)
    return sum(seq.ridge_counts) + n_ridges

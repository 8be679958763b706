"""Typed stripe minutiae: the atomic identity features of a striped coat.

Four structural types are supported, mirroring forensic ridge detail
taxonomy: a ridge (plain stripe segment between two endpoints), a
bifurcation and a convergence (three branches meeting at a junction),
and an enclosure (a stripe splitting and rejoining into a closed loop).
Each minutia carries keypoints in normalized texture coordinates, one or
more angles in degrees, and the anatomical region it sits in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class MinutiaKind(Enum):
    """The four structural minutia types."""

    RIDGE = "Ridge"
    BIFURCATION = "Bifurcation"
    CONVERGENCE = "Convergence"
    ENCLOSURE = "Enclosure"

    @property
    def letter(self) -> str:
        return self.value[0]

    @property
    def keypoint_count(self) -> int:
        return _KEYPOINT_COUNTS[self]

    @classmethod
    def from_letter(cls, letter: str) -> "MinutiaKind":
        for kind in cls:
            if kind.letter == letter:
                return kind
        raise ValueError(f"unknown minutia kind letter {letter!r}")


_KEYPOINT_COUNTS = {
    MinutiaKind.RIDGE: 2,
    MinutiaKind.BIFURCATION: 4,
    MinutiaKind.CONVERGENCE: 4,
    MinutiaKind.ENCLOSURE: 6,
}


class RegionId(Enum):
    """Three anatomical regions along the flank, in scan order.

    Display labels are conventions of this toolkit; pass custom labels to
    the prose renderer to override them.
    """

    FORE = "F"
    MID = "M"
    HIND = "H"

    @property
    def letter(self) -> str:
        return self.value

    @classmethod
    def from_letter(cls, letter: str) -> "RegionId":
        for region in cls:
            if region.value == letter:
                return region
        raise ValueError(f"unknown region letter {letter!r}")


#: Default human-readable labels used by the prose renderer.
DEFAULT_REGION_LABELS = {
    RegionId.FORE: "fore",
    RegionId.MID: "mid",
    RegionId.HIND: "hind",
}

SCAN_ORDER = (RegionId.FORE, RegionId.MID, RegionId.HIND)


@dataclass(frozen=True)
class Keypoint:
    """A point in normalized texture coordinates, both axes in [0, 1]."""

    x: float
    y: float

    def __post_init__(self) -> None:
        for name, v in (("x", self.x), ("y", self.y)):
            if not math.isfinite(v):
                raise ValueError(f"keypoint {name} must be finite, got {v!r}")
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"keypoint {name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class Minutia:
    """One typed structural feature.

    Keypoint layout by kind:
      Ridge        2: the two endpoints.
      Bifurcation  4: junction first, then three branch endpoints.
      Convergence  4: junction first, then three branch endpoints.
      Enclosure    6: loop order (terminal, split point, upper apex,
                       rejoin point, terminal, lower apex).

    Angles are stored in degrees and normalized into [0, 360) at
    construction. ``branch_deg`` applies to bifurcation/convergence/
    enclosure, ``convergence_deg`` to enclosure only; validation of
    which angles must be present is done by :func:`validate`, not here.
    """

    kind: MinutiaKind
    keypoints: tuple[Keypoint, ...]
    orientation_deg: float
    region: RegionId
    branch_deg: float | None = None
    convergence_deg: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "keypoints", tuple(self.keypoints))
        object.__setattr__(
            self, "orientation_deg", _normalize_angle(self.orientation_deg, "orientation_deg")
        )
        if self.branch_deg is not None:
            object.__setattr__(self, "branch_deg", _normalize_angle(self.branch_deg, "branch_deg"))
        if self.convergence_deg is not None:
            object.__setattr__(
                self, "convergence_deg", _normalize_angle(self.convergence_deg, "convergence_deg")
            )


def _normalize_angle(value: float, name: str) -> float:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")
    return float(value) % 360.0


class InvalidMinutia(ValueError):
    """Raised when an operation requires a valid minutia and gets a broken one."""


@dataclass(frozen=True)
class ValidationResult:
    """Outcome of :func:`validate`: ``ok`` plus the first violation found."""

    ok: bool
    error: str | None = None
    message: str | None = None

    def __bool__(self) -> bool:
        return self.ok


_OK = ValidationResult(True)


def validate(m: Minutia) -> ValidationResult:
    """Check a minutia against the structural rules of its kind.

    Deterministic and total: returns a result for any input, reporting
    the first violated rule. Error codes: ``WrongKeypointCount``,
    ``AngleOutOfRange``, ``MissingAngle``, ``UnexpectedAngle``.
    """
    expected = m.kind.keypoint_count
    if len(m.keypoints) != expected:
        return ValidationResult(
            False,
            "WrongKeypointCount",
            f"{m.kind.value} requires {expected} keypoints, got {len(m.keypoints)}",
        )

    if m.kind is MinutiaKind.RIDGE:
        if m.branch_deg is not None or m.convergence_deg is not None:
            return ValidationResult(
                False, "UnexpectedAngle", "Ridge carries only an orientation angle"
            )
    elif m.kind in (MinutiaKind.BIFURCATION, MinutiaKind.CONVERGENCE):
        if m.branch_deg is None:
            return ValidationResult(
                False, "MissingAngle", f"{m.kind.value} requires a branch angle"
            )
        if m.convergence_deg is not None:
            return ValidationResult(
                False, "UnexpectedAngle", f"{m.kind.value} does not carry a convergence angle"
            )
    else:  # enclosure
        if m.branch_deg is None:
            return ValidationResult(False, "MissingAngle", "Enclosure requires a branch angle")
        if m.convergence_deg is None:
            return ValidationResult(
                False, "MissingAngle", "Enclosure requires a convergence angle"
            )

    if m.kind is MinutiaKind.CONVERGENCE and not 180.0 <= m.orientation_deg < 360.0:
        return ValidationResult(
            False,
            "AngleOutOfRange",
            f"Convergence orientation must lie in [180, 360), got {m.orientation_deg}",
        )
    return _OK


def require_valid(m: Minutia) -> None:
    result = validate(m)
    if not result.ok:
        raise InvalidMinutia(f"{result.error}: {result.message}")


def stroke_geometry(m: Minutia) -> list[list[tuple[float, float]]]:
    """Canonical drawable form of a minutia as polylines in [0, 1] coords.

    Ridge yields one two-point segment; bifurcation and convergence yield
    three segments all incident to the junction keypoint; enclosure yields
    a single closed polyline through its six keypoints (first point
    repeated at the end).
    """
    require_valid(m)
    pts = [(kp.x, kp.y) for kp in m.keypoints]
    if m.kind is MinutiaKind.RIDGE:
        return [pts]
    if m.kind in (MinutiaKind.BIFURCATION, MinutiaKind.CONVERGENCE):
        junction = pts[0]
        return [[junction, branch] for branch in pts[1:]]
    return [pts + [pts[0]]]


# --- canonical keypoint templates -----------------------------------------
# Used wherever a minutia must be materialized from descriptor data alone
# (decoding, degradation, built-in seed patches). Shapes are schematic.

_CANONICAL_KEYPOINTS: dict[MinutiaKind, tuple[tuple[float, float], ...]] = {
    MinutiaKind.RIDGE: ((0.2, 0.5), (0.8, 0.5)),
    MinutiaKind.BIFURCATION: ((0.35, 0.5), (0.05, 0.5), (0.9, 0.25), (0.9, 0.75)),
    MinutiaKind.CONVERGENCE: ((0.65, 0.5), (0.95, 0.5), (0.1, 0.25), (0.1, 0.75)),
    MinutiaKind.ENCLOSURE: (
        (0.05, 0.5),
        (0.3, 0.5),
        (0.5, 0.2),
        (0.7, 0.5),
        (0.95, 0.5),
        (0.5, 0.8),
    ),
}


def canonical_keypoints(kind: MinutiaKind) -> tuple[Keypoint, ...]:
    """Template keypoints for a kind, centered in the unit square."""
    return tuple(Keypoint(x, y) for x, y in _CANONICAL_KEYPOINTS[kind])


def canonical_minutia(kind: MinutiaKind, orientation_deg: float, region: RegionId) -> Minutia:
    """Build a valid minutia of ``kind`` from template geometry.

    Branch and convergence angles default to 45 degrees where the kind
    requires them.
    """
    branch = None if kind is MinutiaKind.RIDGE else 45.0
    conv = 45.0 if kind is MinutiaKind.ENCLOSURE else None
    return Minutia(
        kind=kind,
        keypoints=canonical_keypoints(kind),
        orientation_deg=orientation_deg,
        region=region,
        branch_deg=branch,
        convergence_deg=conv,
    )


# --- serialization ---------------------------------------------------------


def minutia_to_dict(m: Minutia) -> dict:
    """JSON form with fixed field names {kind, keypoints, angles, region}."""
    angles = {"orientation": m.orientation_deg}
    if m.branch_deg is not None:
        angles["branch"] = m.branch_deg
    if m.convergence_deg is not None:
        angles["convergence"] = m.convergence_deg
    return {
        "kind": m.kind.value,
        "keypoints": [[kp.x, kp.y] for kp in m.keypoints],
        "angles": angles,
        "region": m.region.name.capitalize(),
    }


def minutia_from_dict(d: dict) -> Minutia:
    angles = d["angles"]
    return Minutia(
        kind=MinutiaKind(d["kind"]),
        keypoints=tuple(Keypoint(float(x), float(y)) for x, y in d["keypoints"]),
        orientation_deg=float(angles["orientation"]),
        region=RegionId[d["region"].upper()],
        branch_deg=float(angles["branch"]) if "branch" in angles else None,
        convergence_deg=float(angles["convergence"]) if "convergence" in angles else None,
    )

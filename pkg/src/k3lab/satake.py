"""Period frames, Iwasawa coordinates, and boundary classification.

A period frame is a 22 x 3 real matrix whose columns span a positive
definite 3-plane for the standard K3 intersection form.  This module
normalizes frames to column Q-norm 2 (matching the reference frame
L0, whose columns pair to 2), rotates them into the triangular Siegel
form with bottom diagonal (e^-c, e^-b-c, e^-a-b-c), classifies the
boundary behaviour of coordinate sequences into the four degeneration
types, extracts the scaled limit payloads, and realizes the collapsed
limit spaces (flat torus orbifolds or the unit segment) for the metric
layer.

The boundary wiring follows the lattice kind of the basis: for a
Gamma16-type basis the TypeB and TypeC payloads realize as flat
orbifolds T^3/+-1 and T^2/+-1; for an E8-type basis they realize as
the unit segment, as does TypeD in both cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Sequence

import numpy as np

from .kemetric import (
    FlatOrbifold,
    SegmentSpace,
    flat_orbifold_diameter,
    flat_orbifold_distance,
)
from .lattice import (
    E8_TYPE,
    GAMMA16_TYPE,
    StandardBasisSpec,
    standard_gram,
    vector_props,
)

__all__ = [
    "PeriodFrame",
    "IwasawaCoordinates",
    "BoundaryVerdict",
    "PolarizationClass",
    "ClassifyThresholds",
    "Realization",
    "NonSiegelError",
    "q_orthonormalize",
    "triangularize",
    "classify_sequence",
    "phi_realize",
    "polarized_filter",
    "basis_convert",
    "reference_frame",
    "diagonal_flow",
]

FRAME_NORM = 2.0

_BTYPES = ("Interior", "TypeA", "TypeB", "TypeC", "TypeD", "Indeterminate")
_J3 = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])

_GRAM_CACHE: dict[str, np.ndarray] = {}


class NonSiegelError(ValueError):
    """The frame's bottom block degenerates against the reference flag."""


def _gram_array(basis: StandardBasisSpec) -> np.ndarray:
    arr = _GRAM_CACHE.get(basis.kind)
    if arr is None:
        arr = np.array(basis.gram.entries, dtype=float)
        _GRAM_CACHE[basis.kind] = arr
    return arr


def _inertia(sym: np.ndarray) -> tuple[int, int, int]:
    eig = np.linalg.eigvalsh(sym)
    tol = 1e-10 * max(1.0, float(np.max(np.abs(eig))))
    return (
        int(np.sum(eig > tol)),
        int(np.sum(eig < -tol)),
        int(np.sum(np.abs(eig) <= tol)),
    )


@dataclass(frozen=True)
class PeriodFrame:
    """22 x 3 frame whose columns span a positive definite 3-plane."""

    matrix: np.ndarray
    basis: StandardBasisSpec

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (22, 3):
            raise ValueError(f"frame must be 22 x 3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("frame entries must be finite")
        object.__setattr__(self, "matrix", m)
        g = self.gram()
        p, n, z = _inertia(g)
        if (p, n, z) != (3, 0, 0):
            raise ValueError(
                f"frame plane is not positive definite: inertia ({p}, {n}, {z})"
            )

    def gram(self) -> np.ndarray:
        q = _gram_array(self.basis)
        g = self.matrix.T @ q @ self.matrix
        return 0.5 * (g + g.T)


def reference_frame(basis: StandardBasisSpec) -> PeriodFrame:
    """The frame L0: corner antidiagonal on top, identity block below."""
    m = np.zeros((22, 3))
    for k in range(3):
        m[k, 2 - k] = 1.0
        m[19 + k, k] = 1.0
    return PeriodFrame(matrix=m, basis=basis)


def diagonal_flow(a: float, b: float, c: float) -> np.ndarray:
    """22 x 22 diagonal isometry scaling the three hyperbolic pairs.

    Acting on the reference frame it realizes exactly the coordinates
    (a, b, c): the pairs (x1, x22), (x2, x21), (x3, x20) scale by
    e^(a+b+c), e^(b+c), e^c and their reciprocals.
    """
    d = np.ones(22)
    for slot, s in ((0, a + b + c), (1, b + c), (2, c)):
        d[slot] = math.exp(s)
        d[21 - slot] = math.exp(-s)
    return np.diag(d)


def q_orthonormalize(frame: PeriodFrame) -> PeriodFrame:
    """Gram-Schmidt in the induced inner product; columns get Q-norm 2."""
    q = _gram_array(frame.basis)
    p = frame.matrix.copy()
    for j in range(3):
        v = p[:, j]
        for i in range(j):
            v = v - (p[:, i] @ q @ v) / FRAME_NORM * p[:, i]
        nrm = v @ q @ v
        if nrm <= 0:
            raise ValueError(
                "frame plane is not positive definite under Gram-Schmidt"
            )
        p[:, j] = v * math.sqrt(FRAME_NORM / nrm)
    return PeriodFrame(matrix=p, basis=frame.basis)


@dataclass(frozen=True)
class IwasawaCoordinates:
    """Triangular Siegel form of a normalized frame.

    alphas holds rows 1..21 of the rotated frame, including the two
    exponential diagonal entries e^-c at (20, 1) and e^-b-c at (21, 2)
    and the structural zero below them; the omitted row 22 is
    (0, 0, e^-a-b-c).  rotation is the SO(3) gauge with U = (P S)
    rotation, where S flips the sign of the first column when the raw
    factorization lands in the orientation-reversing coset.
    """

    a: float
    b: float
    c: float
    alphas: np.ndarray
    rotation: np.ndarray
    column_flip: tuple[int, int, int] = (1, 1, 1)
    frame_norm: float = FRAME_NORM

    def __post_init__(self):
        al = np.asarray(self.alphas, dtype=float)
        if al.shape != (21, 3):
            raise ValueError("alphas must hold rows 1..21, a 21 x 3 block")
        if not (al[19, 0] > 0 and al[20, 1] > 0):
            raise ValueError("triangular diagonal must be positive")
        if al[20, 0] != 0.0:
            raise ValueError("entries below the triangular diagonal must vanish")
        if self.frame_norm != FRAME_NORM:
            raise ValueError(f"frame norm is fixed at {FRAME_NORM}")
        object.__setattr__(self, "alphas", al)

    def matrix(self) -> np.ndarray:
        """The full 22 x 3 triangular frame."""
        bottom = np.array([[0.0, 0.0, math.exp(-self.a - self.b - self.c)]])
        return np.vstack([self.alphas, bottom])


def triangularize(frame: PeriodFrame) -> IwasawaCoordinates:
    """Rotate a normalized frame into the triangular Siegel form.

    The bottom 3 x 3 block is carried to upper triangular shape with
    positive diagonal (d1, d2, d3) by a right rotation, and the
    coordinates are read off as c = -ln d1, b = ln d1 - ln d2,
    a = ln d2 - ln d3.
    """
    g = frame.gram()
    if not np.allclose(g, FRAME_NORM * np.eye(3), atol=1e-8):
        raise ValueError("frame must be Q-orthonormalized first")
    bottom = frame.matrix[19:22, :]
    bp = _J3 @ bottom @ _J3
    qmat, rmat = np.linalg.qr(bp.T)
    # rank deficiency shows as a diagonal entry tiny relative to its own
    # column; deep Siegel frames have tiny but full-ratio diagonals
    colnorms = np.linalg.norm(bp.T, axis=0)
    if np.any(np.abs(np.diag(rmat)) <= 1e-12 * colnorms) or np.any(colnorms == 0):
        raise NonSiegelError(
            "bottom 3 x 3 block is singular: the plane degenerates against "
            "the reference flag (non-Siegel position)"
        )
    signs = np.sign(np.diag(rmat))
    qmat = qmat * signs[None, :]
    rot = _J3 @ qmat @ _J3
    flip = (1, 1, 1)
    if np.linalg.det(rot) < 0:
        # absorb the reflection: flip the first input column, so the
        # recorded rotation is special orthogonal for the flipped frame
        flip = (-1, 1, 1)
        rot = np.diag(flip).astype(float) @ rot
    u = (frame.matrix * np.array(flip)[None, :]) @ rot
    u[20, 0] = 0.0
    u[21, 0] = 0.0
    u[21, 1] = 0.0
    d1, d2, d3 = u[19, 0], u[20, 1], u[21, 2]
    return IwasawaCoordinates(
        a=math.log(d2) - math.log(d3),
        b=math.log(d1) - math.log(d2),
        c=-math.log(d1),
        alphas=u[:21, :],
        rotation=rot,
        column_flip=flip,
    )


@dataclass(frozen=True)
class ClassifyThresholds:
    """Trend thresholds for boundary classification.

    A coordinate diverges when its last value exceeds ``divergence`` and
    the last three values increase; it is bounded when the total
    variation of the last half of the sequence stays below
    ``variation``.  Terms must satisfy a, b, c >= -siegel_bound.
    """

    divergence: float = 20.0
    variation: float = 0.1
    siegel_bound: float = 5.0

    def __post_init__(self):
        if not (self.divergence > 0 and self.variation > 0):
            raise ValueError("thresholds must be positive")
        if not self.siegel_bound >= 0:
            raise ValueError("siegel_bound must be nonnegative")


@dataclass(frozen=True)
class BoundaryVerdict:
    """Boundary type of a coordinate sequence with its limit payload.

    payload is present exactly for TypeA (a 20 x 2 plane in the span of
    x2..x21 with positive definite Gram), TypeB (det-1 scaled upper
    triangular 3 x 3), and TypeC (det-1 scaled 2 x 2).
    """

    btype: str
    lattice_kind: str
    payload: np.ndarray | None = None
    diagnostics: dict = dataclass_field(default_factory=dict)

    def __post_init__(self):
        if self.btype not in _BTYPES:
            raise ValueError(f"unknown boundary type {self.btype!r}")
        if self.lattice_kind not in (E8_TYPE, GAMMA16_TYPE):
            raise ValueError(f"unknown lattice kind {self.lattice_kind!r}")
        needs = self.btype in ("TypeA", "TypeB", "TypeC")
        if needs != (self.payload is not None):
            raise ValueError("payload present iff btype is TypeA, TypeB, or TypeC")
        if self.btype == "TypeA":
            pl = np.asarray(self.payload, dtype=float)
            if pl.shape != (20, 2):
                raise ValueError("TypeA payload must be 20 x 2")
            qmid = _gram_array(standard_gram(self.lattice_kind))[1:21, 1:21]
            gr = pl.T @ qmid @ pl
            if _inertia(0.5 * (gr + gr.T))[0] != 2:
                raise ValueError("TypeA payload must span a positive 2-plane")
            object.__setattr__(self, "payload", pl)


def _trend(values: np.ndarray, th: ClassifyThresholds) -> str:
    last = values[-1]
    if last > th.divergence and values[-3] < values[-2] < values[-1]:
        return "divergent"
    half = values[len(values) // 2 :]
    if float(np.sum(np.abs(np.diff(half)))) < th.variation:
        return "bounded"
    return "indeterminate"


def classify_sequence(
    coords: Sequence[IwasawaCoordinates],
    thresholds: ClassifyThresholds | None = None,
    lattice_kind: str = E8_TYPE,
) -> BoundaryVerdict:
    """Boundary verdict for a sequence of Iwasawa coordinates.

    Trends are finite-data diagnostics, not limits: a sequence that is
    neither clearly bounded nor clearly divergent yields Indeterminate
    rather than a guess.  Payloads are taken from the final term.
    """
    th = thresholds or ClassifyThresholds()
    if len(coords) < 3:
        raise ValueError("classification needs at least 3 terms")
    a = np.array([x.a for x in coords])
    b = np.array([x.b for x in coords])
    c = np.array([x.c for x in coords])
    low = min(a.min(), b.min(), c.min())
    if low < -th.siegel_bound:
        raise ValueError(
            f"coordinate {low:.6g} violates the Siegel bound "
            f"a, b, c >= -{th.siegel_bound}"
        )
    trends = {
        "a": _trend(a, th),
        "b": _trend(b, th),
        "c": _trend(c, th),
        "a+b": _trend(a + b, th),
        "b+c": _trend(b + c, th),
        "a+b+c": _trend(a + b + c, th),
    }
    diag = {
        "trends": trends,
        "last": {"a": float(a[-1]), "b": float(b[-1]), "c": float(c[-1])},
    }
    last = coords[-1]

    def verdict(btype, payload=None):
        return BoundaryVerdict(
            btype=btype, lattice_kind=lattice_kind, payload=payload,
            diagnostics=diag,
        )

    if trends["a+b+c"] == "bounded":
        return verdict("Interior")
    if trends["b"] == "divergent":
        return verdict("TypeD")
    if trends["b+c"] == "bounded" and trends["a"] == "divergent":
        return verdict("TypeA", last.matrix()[1:21, 0:2].copy())
    if trends["a+b"] == "bounded" and trends["c"] == "divergent":
        scale = math.exp(last.c + 2.0 * last.b / 3.0 + last.a / 3.0)
        block = np.vstack([last.alphas[19:21, :], last.matrix()[21:22, :]])
        return verdict("TypeB", scale * block)
    if (
        trends["b"] == "bounded"
        and trends["a"] == "divergent"
        and trends["c"] == "divergent"
    ):
        scale = math.exp(last.c + 0.5 * last.b)
        return verdict("TypeC", scale * last.alphas[19:21, 0:2].copy())
    return verdict("Indeterminate")


@dataclass(frozen=True)
class Realization:
    """A limit space with distances rescaled to unit diameter."""

    space: object
    scale: float = 1.0

    @property
    def kind(self) -> str:
        return type(self.space).__name__

    def distance(self, x, y) -> float:
        if isinstance(self.space, FlatOrbifold):
            return self.scale * flat_orbifold_distance(self.space, x, y)
        return self.space.distance(x, y)


def phi_realize(verdict: BoundaryVerdict, orbifold_grid: int = 16) -> Realization:
    """Collapsed limit space of a boundary verdict.

    Gamma16-kind TypeB and TypeC payloads give flat torus orbifolds
    (det-normalized, then rescaled to unit diameter); E8-kind TypeB and
    TypeC, and TypeD, give the unit segment.  TypeA limits carry a full
    elliptic K3 geometry and need a Weierstrass family to realize.
    """
    if verdict.btype in ("Interior", "Indeterminate"):
        raise ValueError(f"{verdict.btype} verdicts have no boundary realization")
    if verdict.btype == "TypeA":
        raise ValueError(
            "TypeA realization requires a Weierstrass family for the "
            "limit plane; it is not determined by the payload alone"
        )
    if verdict.btype == "TypeD" or verdict.lattice_kind == E8_TYPE:
        return Realization(space=SegmentSpace(1.0), scale=1.0)
    pl = np.asarray(verdict.payload, dtype=float)
    dim = pl.shape[0]
    det = float(np.linalg.det(pl))
    if det <= 0:
        raise ValueError("payload determinant must be positive")
    basis = pl / det ** (1.0 / dim)
    orb = FlatOrbifold(dim=dim, basis=basis)
    diam = flat_orbifold_diameter(orb, grid=orbifold_grid)
    return Realization(space=orb, scale=1.0 / diam)


@dataclass(frozen=True)
class PolarizationClass:
    """A primitive integral vector of positive even norm 2d."""

    vector: tuple[int, ...]
    basis: StandardBasisSpec

    def __post_init__(self):
        raw = list(self.vector)
        if len(raw) != 22:
            raise ValueError("polarization vector must have 22 entries")
        ints = []
        for x in raw:
            r = round(float(x))
            if abs(float(x) - r) > 1e-9:
                raise ValueError(f"polarization entry {x!r} is not integral")
            ints.append(int(r))
        props = vector_props(tuple(ints), self.basis.gram)
        if not props.primitive:
            raise ValueError("polarization vector must be primitive")
        if props.norm <= 0:
            raise ValueError(
                f"polarization norm must be positive, got {props.norm}"
            )
        object.__setattr__(self, "vector", tuple(ints))

    @property
    def norm(self) -> int:
        return vector_props(self.vector, self.basis.gram).norm


@dataclass(frozen=True)
class FilterReport:
    """Outcome of the polarized boundary filter."""

    passed: bool
    verdict: BoundaryVerdict
    reason: str
    residuals: tuple[float, ...]


def polarized_filter(
    frames: Sequence[PeriodFrame],
    lam: PolarizationClass,
    thresholds: ClassifyThresholds | None = None,
    tol: float = 1e-8,
) -> FilterReport:
    """Check a polarized family against the permitted boundary types.

    A sequence of frames whose planes all contain the polarization can
    only degenerate to TypeA or TypeD (or stay Interior); TypeB or
    TypeC verdicts contradict that and fail the filter.
    """
    if not frames:
        raise ValueError("no frames given")
    target = np.array(lam.vector, dtype=float)
    tnorm = float(np.linalg.norm(target))
    residuals = []
    coords = []
    for k, fr in enumerate(frames):
        q = _gram_array(fr.basis)
        p = fr.matrix
        sol = np.linalg.solve(fr.gram(), p.T @ q @ target)
        resid = float(np.linalg.norm(target - p @ sol)) / tnorm
        residuals.append(resid)
        if resid > tol:
            raise ValueError(
                f"polarization does not lie in the plane of frame {k}: "
                f"relative residual {resid:.3e}"
            )
        coords.append(triangularize(q_orthonormalize(fr)))
    verdict = classify_sequence(
        coords, thresholds, lattice_kind=frames[0].basis.kind
    )
    if verdict.btype in ("TypeA", "TypeD", "Interior"):
        return FilterReport(
            passed=True,
            verdict=verdict,
            reason=f"{verdict.btype} is permitted for a polarized family",
            residuals=tuple(residuals),
        )
    if verdict.btype in ("TypeB", "TypeC"):
        reason = (
            f"{verdict.btype} contradicts the polarized boundary "
            "restriction (only TypeA and TypeD limits can fix a "
            "polarization)"
        )
    else:
        reason = "trend is indeterminate; no boundary type established"
    return FilterReport(
        passed=False,
        verdict=verdict,
        reason=reason,
        residuals=tuple(residuals),
    )


def basis_convert(v, direction: str) -> np.ndarray:
    """Convert between the hyperbolic standard basis and the w-basis.

    On the three distinguished pairs (k, 23-k) the map is the involution
    out[k] = (v[k] + v[23-k]) / sqrt 2, out[23-k] = (v[k] - v[23-k]) /
    sqrt 2 (1-based); the middle 16 coordinates pass through unchanged.
    Applying it twice returns the input, so both directions share it;
    the direction tag documents intent and is validated only.
    """
    if direction not in ("to_w", "to_x"):
        raise ValueError(f"direction must be 'to_w' or 'to_x', got {direction!r}")
    arr = np.asarray(v, dtype=float)
    if arr.shape != (22,):
        raise ValueError("vector must have length 22")
    out = arr.copy()
    s = math.sqrt(2.0)
    for k in range(3):
        i, j = k, 21 - k
        out[i] = (arr[i] + arr[j]) / s
        out[j] = (arr[i] - arr[j]) / s
    return out

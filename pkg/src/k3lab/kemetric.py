"""Generalized Kaehler-Einstein metrics on the base sphere.

The conformal density rho(t) = mu(h8(t), h12(t)) of a Weierstrass pair
turns the projective line into a singular metric space.  This module
evaluates rho in the two standard charts, builds graded two-chart meshes
that route around the singular fibers, and measures the resulting
geometry: shortest-path distances, diameters, volumes, ball volumes,
finite-difference Gauss curvature, and Bishop-Gromov ratios.  It also
provides the flat model spaces (orbifold quotients of flat tori and the
unit segment) that appear as collapsed limits, plus landmark-matrix
comparisons: a Gromov-Hausdorff upper bound and a segment-fit score.

Chart conventions: chart 0 is the coordinate t, chart 1 is s = 1/t.  A
density rho in chart 0 transforms to rho~(s) = |s|^{-4} rho(1/s); the
weight 4 is fixed by the degree-8/12 twists of the sections.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field

import numpy as np
from numpy.polynomial import polynomial as npp
from scipy import sparse
from scipy.integrate import trapezoid
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from . import modular
from .weierstrass import (
    AT_INFINITY,
    ClusteringError,
    NonMinimalError,
    WeierstrassData,
    vanishing_orders,
)

__all__ = [
    "ConformalFactorField",
    "RoundSphereField",
    "SphereMesh",
    "MetricSummary",
    "FlatOrbifold",
    "SegmentSpace",
    "conformal_factor",
    "build_mesh",
    "shortest_distances",
    "diameter",
    "summarize",
    "total_volume",
    "ball_volume",
    "curvature_fd",
    "bishop_gromov_ratio",
    "flat_orbifold_distance",
    "flat_orbifold_diameter",
    "gh_upper_bound",
    "segment_fit",
]

SINGULAR = math.inf
"""Marker returned by conformal_factor at a singular fiber."""

# Relative discriminant threshold below which a point is treated as lying
# on a singular fiber.  Slightly looser than the modular module's own
# degeneracy gate so the marker fires before mu_gauged would raise.
_MARKER_RTOL = 1e-13

_CHART_SPAN = 1.1
_SEAM_LO = 1.0 / _CHART_SPAN
_INVERT_TOL = 1e-12
_EVAL_CHUNK = 200_000


def _leading_zeros(coeffs) -> int:
    for k, c in enumerate(coeffs):
        if c != 0:
            return k
    return len(coeffs)


def _chart_polys(coeffs: np.ndarray, cap: int):
    """(t-chart, s-chart) deflated representations of one section.

    Each representation is (shift, deflated-coefficients) with the shift
    counting exact zero roots at the chart origin, so values can be
    assembled in log space without underflow near deep singular points.
    The s-chart polynomial is the degree-cap reversal s^cap * h(1/s).
    """
    padded = np.zeros(cap + 1, dtype=complex)
    padded[: coeffs.size] = coeffs
    out = []
    for arr in (padded, padded[::-1].copy()):
        k = _leading_zeros(arr)
        if k == arr.size:
            out.append((0, None))
        else:
            out.append((k, arr[k:].copy()))
    return out[0], out[1]


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _overlap_weight(absz):
    """Partition-of-unity weight in log radius; w(r) + w(1/r) = 1."""
    band = math.log(_CHART_SPAN)
    ell = np.log(np.maximum(absz, 1e-300))
    return _smoothstep((band - ell) / (2.0 * band))


def _section_log(z, shift, coeffs, logz, unit):
    """(log |h(z)|, phase factor) for a deflated section in log space."""
    if coeffs is None:
        return np.full(z.shape, -np.inf), np.ones(z.shape, dtype=complex)
    vals = npp.polyval(z, coeffs)
    if not np.all(np.isfinite(vals)):
        raise ValueError("section evaluation overflowed; coefficients too large")
    absv = np.abs(vals)
    with np.errstate(divide="ignore"):
        lv = np.log(absv)
    phase = np.where(absv > 0, vals / np.where(absv > 0, absv, 1.0), 1.0)
    if shift:
        lv = lv + shift * logz
        phase = phase * unit**shift
    return lv, phase


def _is_inf(v) -> bool:
    return isinstance(v, float) and math.isinf(v)


def _orders_escalating(data: WeierstrassData, tol: float):
    """Vanishing orders with the cluster radius escalated on ambiguity.

    Root constellations near a deep degeneration (rings of simple roots
    at radius delta^(1/4), say) are ambiguous at a fixed radius; merging
    the whole ring is the right reading for metric purposes, since the
    positions only guide mesh grading and exclusion.  Classification
    layers keep the strict single-radius semantics.  Returns the orders
    and whether any escalation happened.
    """
    last = None
    for k in range(7):
        try:
            return vanishing_orders(data, tol=tol * 30.0**k), k > 0
        except ClusteringError as err:
            last = err
    raise last


def _singular_sort_key(item):
    p = item[0]
    if p == AT_INFINITY:
        return (1, 0.0, 0.0)
    z = complex(p)
    return (0, z.real, z.imag)


class ConformalFactorField:
    """rho(t) = mu(h8(t), h12(t)) for a Weierstrass pair, in both charts.

    Evaluation gauges the section values in log space before calling the
    batch torus-area kernel, which keeps points deep inside graded
    exclusion funnels (where section values sit far below the float
    underflow threshold) exactly representable.

    Raises SingularFiberError when the discriminant vanishes identically,
    since then no fiber carries a torus area.  Pairs with a non-minimal
    point still define a density away from it but carry infinite total
    volume; mesh construction and total_volume refuse them.
    """

    def __init__(self, data: WeierstrassData, tol: float = 1e-8,
                 normalization: float = modular.METRIC_NORMALIZATION):
        self.data = data
        self.tol = float(tol)
        self.invert_tol = _INVERT_TOL
        self.normalization = float(normalization)
        numeric = data.to_numeric()
        c8 = np.array(numeric.h8.coefficients, dtype=complex)
        c12 = np.array(numeric.h12.coefficients, dtype=complex)
        t8, s8 = _chart_polys(c8, numeric.h8.degree_cap)
        t12, s12 = _chart_polys(c12, numeric.h12.degree_cap)
        self._charts = ((t8, t12), (s8, s12))

        orders, escalated = _orders_escalating(data, tol)
        if any(_is_inf(v[2]) for v in orders.values()):
            raise modular.SingularFiberError(
                "discriminant vanishes identically; no conformal factor"
            )
        self.singular_points = sorted(
            ((p, v) for p, v in orders.items() if v[2] >= 1),
            key=_singular_sort_key,
        )
        # For numeric data these are candidates at cluster resolution: a
        # merged root ring mimics a non-minimal point, and a genuinely
        # multiple root splinters below one.  Mesh construction confirms
        # or clears them with a probe; exact orders are authoritative.
        self.cluster_escalated = bool(escalated)
        self.non_minimal_points = [
            p for p, v in orders.items() if v[0] >= 4 and v[1] >= 6
        ]

    def chart_singular(self, chart: int, span: float = _CHART_SPAN * 1.05):
        """(position, orders) pairs with finite images in one chart.

        The default span keeps overlap images of the other chart's points
        so mesh grading and exclusion see every nearby singularity; pass
        span=inf for the full list.
        """
        out = []
        for p, v in self.singular_points:
            if p == AT_INFINITY:
                z = 0j if chart == 1 else None
            elif chart == 0:
                z = complex(p)
            else:
                z = None if complex(p) == 0 else 1.0 / complex(p)
            if z is not None and abs(z) <= span:
                out.append((z, v))
        return out

    def log_mu_many(self, z, chart: int = 0) -> np.ndarray:
        """log mu(h8(z), h12(z)) in the given chart; +inf marks singular."""
        z = np.asarray(z, dtype=complex)
        flat = z.ravel()
        if flat.size > _EVAL_CHUNK:
            out = np.empty(flat.shape)
            for k in range(0, flat.size, _EVAL_CHUNK):
                out[k : k + _EVAL_CHUNK] = self.log_mu_many(
                    flat[k : k + _EVAL_CHUNK], chart
                )
            return out.reshape(z.shape)
        (sh8, c8), (sh12, c12) = self._charts[chart]
        absz = np.abs(flat)
        with np.errstate(divide="ignore"):
            logz = np.log(absz)
        unit = np.where(absz > 0, flat / np.where(absz > 0, absz, 1.0), 1.0)

        la, pha = _section_log(flat, sh8, c8, logz, unit)
        lb, phb = _section_log(flat, sh12, c12, logz, unit)
        lm4 = np.maximum(la, (2.0 / 3.0) * lb)
        out = np.full(flat.shape, np.inf)
        live = np.isfinite(lm4)
        if live.any():
            ahat = np.where(
                np.isfinite(la[live]), np.exp(la[live] - lm4[live]), 0.0
            ) * pha[live]
            bhat = np.where(
                np.isfinite(lb[live]), np.exp(lb[live] - 1.5 * lm4[live]), 0.0
            ) * phb[live]
            num = ahat**3
            den = num - 27.0 * bhat**2
            scale = np.abs(num) + 27.0 * np.abs(bhat) ** 2
            good = np.abs(den) > _MARKER_RTOL * scale
            idx = np.nonzero(live)[0][good]
            if idx.size:
                area, _, _ = modular.mu_gauged(
                    ahat[good], bhat[good], tol=self.invert_tol
                )
                out[idx] = np.log(area) - 0.5 * lm4[live][good]
        return out.reshape(z.shape)

    def rho_many(self, z, chart: int = 0) -> np.ndarray:
        """Conformal density at an array of chart points; inf marks singular."""
        lm = self.log_mu_many(z, chart)
        with np.errstate(over="ignore"):
            return self.normalization * np.exp(lm)

    def sqrt_rho_many(self, z, chart: int = 0) -> np.ndarray:
        """sqrt(rho); evaluated in log space so it survives rho overflow."""
        lm = self.log_mu_many(z, chart)
        with np.errstate(over="ignore"):
            return np.exp(0.5 * (lm + math.log(self.normalization)))

    def rho(self, t, chart: int = 0) -> float:
        return float(self.rho_many(np.array([t]), chart)[0])


class RoundSphereField:
    """Density of the round two-sphere of a given radius.

    rho(t) = 4 R^2 / (1 + |t|^2)^2 in both charts; constant curvature
    1/R^2, diameter pi R, area 4 pi R^2.  Used to calibrate the mesh,
    quadrature, and curvature operators against closed forms.
    """

    def __init__(self, radius: float = 1.0):
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.singular_points = []
        self.non_minimal_points = []
        self.normalization = 1.0
        self.tol = 1e-12

    def chart_singular(self, chart: int, span: float = math.inf):
        return []

    def rho_many(self, z, chart: int = 0) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return 4.0 * self.radius**2 / (1.0 + np.abs(z) ** 2) ** 2

    def log_mu_many(self, z, chart: int = 0) -> np.ndarray:
        return np.log(self.rho_many(z, chart))

    def sqrt_rho_many(self, z, chart: int = 0) -> np.ndarray:
        return np.sqrt(self.rho_many(z, chart))

    def rho(self, t, chart: int = 0) -> float:
        return float(self.rho_many(np.array([t]), chart)[0])


def conformal_factor(field, t, chart: int = 0) -> float:
    """rho at one chart point: a positive float, or the SINGULAR marker."""
    return field.rho(t, chart)


def _rho_safe(field, z, chart, nudge):
    """rho with isolated infinities replaced by nudged evaluations."""
    vals = field.rho_many(z, chart)
    bad = ~np.isfinite(vals)
    if bad.any():
        step = np.broadcast_to(np.asarray(nudge, dtype=float), z.shape)[bad]
        vals[bad] = field.rho_many(z[bad] + step * (1.0 + 1.0j), chart)
        vals[~np.isfinite(vals)] = 0.0
    return vals


# ---------------------------------------------------------------------------
# mesh construction


@dataclass
class SphereMesh:
    """Graph approximation of the sphere with the conformal metric.

    Nodes are centers of graded quadtree cells in the two charts; edges
    join chart neighbors and seam-overlap pairs, weighted by quadrature
    of sqrt(rho) along the chart segment.  Cell areas integrate rho over
    the cells, so owned cells partition the total volume.
    """

    field: object
    chart: np.ndarray
    pos: np.ndarray
    half: np.ndarray
    owned: np.ndarray
    cell_areas: np.ndarray
    edges: np.ndarray
    edge_lengths: np.ndarray
    resolution: int
    neighbor_factor: float
    exclusion: dict
    excluded_volume_estimate: float
    dropped_components: int = 0
    quad_anchor: np.ndarray | None = dataclass_field(default=None, repr=False)
    _graph: object = dataclass_field(default=None, repr=False)
    _rows: dict = dataclass_field(default_factory=dict, repr=False)
    _summary: object = dataclass_field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return int(self.pos.size)

    @property
    def total_cell_volume(self) -> float:
        return float(self.cell_areas[self.owned].sum())

    def graph(self):
        if self._graph is None:
            n = self.n_nodes
            i, j = self.edges[:, 0], self.edges[:, 1]
            w = self.edge_lengths
            m = sparse.coo_matrix(
                (np.r_[w, w], (np.r_[i, j], np.r_[j, i])), shape=(n, n)
            )
            self._graph = m.tocsr()
        return self._graph

    def distances_from(self, source: int) -> np.ndarray:
        if source not in self._rows:
            row = csgraph.dijkstra(self.graph(), indices=[source])[0]
            self._rows[source] = row
        return self._rows[source]


def _quadtree_leaves(sing_pos, sing_sigma, base_h, grading):
    """Graded leaf cells (centers, half-sizes) covering one chart disk."""
    centers = []
    halves = []
    frontier = np.array([0j])
    h = _CHART_SPAN
    while frontier.size:
        if sing_pos.size:
            d = np.abs(frontier[:, None] - sing_pos[None, :])
            tgt = np.minimum(
                base_h,
                np.min(np.maximum(0.35 * sing_sigma[None, :], grading * d), axis=1),
            )
        else:
            tgt = np.full(frontier.size, base_h)
        inside = np.abs(frontier) - 1.415 * h <= _CHART_SPAN * 1.02
        is_leaf = (h <= tgt) & inside
        centers.append(frontier[is_leaf])
        halves.append(np.full(int(is_leaf.sum()), h))
        split = inside & ~is_leaf
        if not split.any() or h < 1e-290:
            break
        q = 0.5 * h
        offs = np.array([q + 1j * q, q - 1j * q, -q + 1j * q, -q - 1j * q])
        frontier = (frontier[split][:, None] + offs[None, :]).ravel()
        h = q
    return np.concatenate(centers), np.concatenate(halves)


def _gl_unit(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def _probe_sigma(field, chart, p, metric_r, r_cap, angle):
    """Chart radius around p whose metric distance to p equals metric_r."""
    direction = complex(math.cos(angle), math.sin(angle))
    hi = r_cap
    lo = max(r_cap * 1e-8, 1e-280)
    for _ in range(60):
        radii = np.geomspace(lo, hi, 240)
        sq = field.sqrt_rho_many(p + radii * direction, chart)
        fin = np.isfinite(sq)
        if not fin.all():
            top = np.nanmax(np.where(fin, sq, np.nan))
            sq = np.where(fin, sq, top)
        cum = np.concatenate(
            [[0.0], np.cumsum(0.5 * (sq[1:] + sq[:-1]) * np.diff(radii))]
        )
        # integrable power tail below the probe window
        if sq[0] > 0 and sq[6] > 0:
            q = -math.log(sq[6] / sq[0]) / math.log(radii[6] / radii[0])
        else:
            q = 0.0
        q = min(max(q, 0.0), 0.95)
        tail = sq[0] * radii[0] / (1.0 - q)
        total = tail + cum
        if total[0] >= metric_r:
            # the target radius sits below the probe window; shift it down
            if lo <= 1e-276:
                return float(lo)
            hi = 2.0 * lo
            lo = max(lo * 1e-8, 1e-280)
            continue
        if total[-1] < metric_r:
            return float(hi)
        return float(np.interp(metric_r, total, radii))
    return float(hi)


def _non_minimal_witness(field, metric_r: float):
    """A confirmed non-minimal point of the field, or None.

    Exact-mode orders are trusted as stated.  Numeric candidates are
    probed: only a funnel whose length integral fails to close far above
    the underflow floor is confirmed, which separates genuine common
    roots from merged clusters of nearby simple ones.
    """
    candidates = getattr(field, "non_minimal_points", [])
    if not candidates:
        return None
    mode = getattr(getattr(field, "data", None), "mode", "numeric")
    if mode == "exact":
        return candidates[0]
    for p in candidates:
        if p == AT_INFINITY:
            chart, z = 1, 0j
        elif abs(complex(p)) <= 1.0:
            chart, z = 0, complex(p)
        else:
            chart, z = 1, 1.0 / complex(p)
        if _probe_sigma(field, chart, z, metric_r, 0.2, 0.81) < 1e-150:
            return p
    return None


def _diameter_proxy(field) -> float:
    total = 0.0
    for chart in (0, 1):
        best = 0.0
        for ang in (0.23, 1.81, 3.35, 4.92):
            radii = np.geomspace(1e-9, 1.0, 500)
            sq = field.sqrt_rho_many(
                radii * complex(math.cos(ang), math.sin(ang)), chart
            )
            sq = np.where(np.isfinite(sq), sq, 0.0)
            best = max(best, float(trapezoid(sq, radii)))
        total += best
    return max(total, 1e-12)


def _segment_quadrature(field, chart, starts, ends, sing_pos, sing_sigma):
    """Lengths of chart segments by graded Gauss-Legendre quadrature.

    Segments are halved while longer than their midpoint's effective
    distance to the singular set, so the |t|^(-5/6)-type blow-up of
    sqrt(rho) near high-order fibers is resolved by construction.
    """
    n = starts.size
    if n == 0:
        return np.zeros(0)
    work_a, work_b, work_id = starts, ends, np.arange(n)
    fin_a, fin_b, fin_id = [], [], []
    for _ in range(64):
        if work_a.size == 0:
            break
        mid = 0.5 * (work_a + work_b)
        length = np.abs(work_b - work_a)
        if sing_pos.size:
            d = np.abs(mid[:, None] - sing_pos[None, :])
            deff = np.min(np.maximum(d, 0.5 * sing_sigma[None, :]), axis=1)
        else:
            deff = np.full(work_a.shape, np.inf)
        split = length > 0.6 * deff
        fin_a.append(work_a[~split])
        fin_b.append(work_b[~split])
        fin_id.append(work_id[~split])
        work_a = np.concatenate([work_a[split], mid[split]])
        work_b = np.concatenate([mid[split], work_b[split]])
        work_id = np.concatenate([work_id[split], work_id[split]])
    if work_a.size:
        fin_a.append(work_a)
        fin_b.append(work_b)
        fin_id.append(work_id)
    a = np.concatenate(fin_a)
    b = np.concatenate(fin_b)
    ids = np.concatenate(fin_id)
    gx, gw = _gl_unit(4)
    pts = a[:, None] + (b - a)[:, None] * gx[None, :]
    sq = field.sqrt_rho_many(pts.ravel(), chart).reshape(pts.shape)
    sq[~np.isfinite(sq)] = 0.0
    piece = (sq * gw[None, :]).sum(axis=1) * np.abs(b - a)
    out = np.zeros(n)
    np.add.at(out, ids, piece)
    return out


def _cell_areas(field, chart, centers, halves, sing_pos, sing_sigma):
    """Metric areas of square cells by 2x2 (4x4 near singulars) quadrature."""
    gx2, gw2 = np.polynomial.legendre.leggauss(2)
    areas = np.zeros(centers.size)
    if sing_pos.size:
        d = np.min(np.abs(centers[:, None] - sing_pos[None, :]), axis=1)
        fine = d <= 4.0 * halves
    else:
        fine = np.zeros(centers.size, dtype=bool)
    for mask, nsub in ((~fine, 1), (fine, 2)):
        if not mask.any():
            continue
        c = centers[mask]
        h = halves[mask]
        vals = np.zeros(c.size)
        for iy in range(nsub):
            for ix in range(nsub):
                sub_c = (
                    c
                    + (2.0 * ix + 1.0 - nsub) * h / nsub
                    + 1j * (2.0 * iy + 1.0 - nsub) * h / nsub
                )
                sub_h = h / nsub
                for gy in range(2):
                    for gxi in range(2):
                        pts = sub_c + sub_h * (gx2[gxi] + 1j * gx2[gy])
                        rho = _rho_safe(field, pts, chart, 1e-9 * sub_h)
                        vals += gw2[gxi] * gw2[gy] * rho * sub_h**2
        areas[mask] = vals
    return areas


def build_mesh(field, resolution: int = 32, exclusion_radius: float | None = None,
               neighbor_factor: float = 2.6, grading: float = 0.45) -> SphereMesh:
    """Two-chart graded mesh for the conformal metric of a field.

    resolution sets the base cell count across a chart; cells refine
    geometrically toward singular points down to the exclusion radius
    (a metric length, default 1e-4 of a diameter proxy), whose disks are
    removed and routed around.  neighbor_factor sets the graph stencil
    reach in units of the local cell size; larger values track the
    continuum metric more closely at higher cost.  Fields with a
    non-minimal point have infinite volume and are refused.
    """
    if resolution < 4:
        raise ValueError("resolution must be at least 4")
    if exclusion_radius is None:
        exclusion_radius = 1e-4 * _diameter_proxy(field)
    if not exclusion_radius > 0:
        raise ValueError("exclusion_radius must be positive")
    witness = _non_minimal_witness(field, exclusion_radius)
    if witness is not None:
        raise NonMinimalError(
            f"pair is non-minimal at {witness!r}; "
            "the metric end has infinite volume"
        )

    base_h = _CHART_SPAN / int(resolution)
    chart_sing = []
    exclusion = {}
    for chart in (0, 1):
        entries = field.chart_singular(chart)
        pos = np.array([z for z, _ in entries], dtype=complex)
        sigma = np.empty(pos.size)
        for k, (z, v) in enumerate(entries):
            if pos.size > 1:
                sep = min(abs(z - q) for q in pos if q != z)
                r_cap = min(0.35 * sep, 0.45)
            else:
                r_cap = 0.45
            sigma[k] = _probe_sigma(
                field, chart, z, exclusion_radius, r_cap, 0.37 + 0.61 * k
            )
            if sigma[k] < 1e-150:
                # a funnel this deep never closes in double precision:
                # the local length integral is divergent for all
                # practical purposes, i.e. the point is non-minimal
                raise NonMinimalError(
                    "exclusion probe found a bottomless funnel at "
                    f"chart {chart}, z={z!r}; treat the pair as non-minimal"
                )
            exclusion[(chart, z)] = {
                "orders": v,
                "metric_radius": float(exclusion_radius),
                "chart_radius": float(sigma[k]),
            }
        chart_sing.append((pos, sigma))

    all_chart, all_pos, all_half, all_area = [], [], [], []
    excluded_volume = 0.0
    for chart in (0, 1):
        pos_s, sig_s = chart_sing[chart]
        centers, halves = _quadtree_leaves(pos_s, sig_s, base_h, grading)
        keep = np.abs(centers) <= _CHART_SPAN
        centers, halves = centers[keep], halves[keep]
        areas = _cell_areas(field, chart, centers, halves, pos_s, sig_s)
        if pos_s.size:
            nearest = np.argmin(np.abs(centers[:, None] - pos_s[None, :]), axis=1)
            dist = np.abs(centers - pos_s[nearest])
            removed = dist < sig_s[nearest]
        else:
            removed = np.zeros(centers.size, dtype=bool)
        own_mask = (np.abs(centers) <= 1.0) if chart == 0 else (np.abs(centers) < 1.0)
        excluded_volume += float(areas[removed & own_mask].sum())
        kept = ~removed
        all_chart.append(np.full(int(kept.sum()), chart, dtype=np.int8))
        all_pos.append(centers[kept])
        all_half.append(halves[kept])
        all_area.append(areas[kept])

    chart_arr = np.concatenate(all_chart)
    pos_arr = np.concatenate(all_pos)
    half_arr = np.concatenate(all_half)
    area_arr = np.concatenate(all_area)
    owned = np.where(
        chart_arr == 0, np.abs(pos_arr) <= 1.0, np.abs(pos_arr) < 1.0
    )

    edge_set = set()
    trees = {}
    for chart in (0, 1):
        idx = np.nonzero(chart_arr == chart)[0]
        pts = np.c_[pos_arr[idx].real, pos_arr[idx].imag]
        tree = cKDTree(pts)
        trees[chart] = (tree, idx)
        hits = tree.query_ball_point(pts, r=neighbor_factor * half_arr[idx])
        for a, nbrs in enumerate(hits):
            ga = idx[a]
            for b in nbrs:
                gb = idx[b]
                if ga < gb:
                    edge_set.add((int(ga), int(gb)))

    cross_map = {}
    for chart in (0, 1):
        other = 1 - chart
        sel = np.nonzero(
            (chart_arr == chart)
            & (np.abs(pos_arr) > _SEAM_LO * 0.97)
            & (np.abs(pos_arr) <= _CHART_SPAN)
        )[0]
        if sel.size == 0:
            continue
        mapped = 1.0 / pos_arr[sel]
        tree, oidx = trees[other]
        radii = neighbor_factor * half_arr[sel] / np.abs(pos_arr[sel]) ** 2
        hits = tree.query_ball_point(np.c_[mapped.real, mapped.imag], r=radii)
        for a, nbrs in enumerate(hits):
            ga = int(sel[a])
            for b in nbrs:
                gb = int(oidx[b])
                key = (min(ga, gb), max(ga, gb))
                if key not in cross_map and key not in edge_set:
                    # quadrature runs in gb's chart from ga's image there
                    cross_map[key] = (mapped[a], gb)

    edges = np.array(sorted(edge_set | set(cross_map)), dtype=np.int64)
    e0, e1 = edges[:, 0], edges[:, 1]
    lengths = np.zeros(edges.shape[0])
    is_cross = chart_arr[e0] != chart_arr[e1]
    # remember which endpoint's chart carried each seam quadrature, so the
    # graph can be re-weighted under another field along identical paths
    anchor = np.full(edges.shape[0], -1, dtype=np.int64)
    for k in np.nonzero(is_cross)[0]:
        anchor[k] = cross_map[(int(e0[k]), int(e1[k]))][1]
    for chart in (0, 1):
        pos_s, sig_s = chart_sing[chart]
        m = ~is_cross & (chart_arr[e0] == chart)
        if m.any():
            lengths[m] = _segment_quadrature(
                field, chart, pos_arr[e0[m]], pos_arr[e1[m]], pos_s, sig_s
            )
        rows, starts, ends = [], [], []
        for k in np.nonzero(is_cross)[0]:
            start, gb = cross_map[(int(e0[k]), int(e1[k]))]
            if chart_arr[gb] == chart:
                rows.append(k)
                starts.append(start)
                ends.append(pos_arr[gb])
        if rows:
            lengths[np.array(rows)] = _segment_quadrature(
                field,
                chart,
                np.array(starts, dtype=complex),
                np.array(ends, dtype=complex),
                pos_s,
                sig_s,
            )

    if not np.all(np.isfinite(lengths)) or (lengths < 0).any():
        raise RuntimeError("mesh edge quadrature produced invalid lengths")
    if (lengths[~is_cross] <= 0).any():
        raise RuntimeError("degenerate zero-length edge inside a chart")

    mesh = SphereMesh(
        field=field,
        chart=chart_arr,
        pos=pos_arr,
        half=half_arr,
        owned=owned,
        cell_areas=area_arr,
        edges=edges,
        edge_lengths=lengths,
        resolution=int(resolution),
        neighbor_factor=float(neighbor_factor),
        exclusion=exclusion,
        excluded_volume_estimate=excluded_volume,
        quad_anchor=anchor,
    )
    ncomp, labels = csgraph.connected_components(mesh.graph(), directed=False)
    if ncomp > 1:
        counts = np.bincount(labels)
        giant = int(np.argmax(counts))
        keep = labels == giant
        dropped_vol = float(area_arr[~keep & owned].sum())
        total_vol = float(area_arr[owned].sum())
        if dropped_vol > 1e-3 * max(total_vol, 1e-300):
            raise RuntimeError(
                "mesh split into components carrying non-negligible volume"
            )
        remap = -np.ones(mesh.n_nodes, dtype=np.int64)
        remap[keep] = np.arange(int(keep.sum()))
        emask = keep[edges[:, 0]] & keep[edges[:, 1]]
        sub_anchor = anchor[emask]
        sub_anchor = np.where(sub_anchor >= 0, remap[sub_anchor], -1)
        mesh = SphereMesh(
            field=field,
            chart=chart_arr[keep],
            pos=pos_arr[keep],
            half=half_arr[keep],
            owned=owned[keep],
            cell_areas=area_arr[keep],
            edges=remap[edges[emask]],
            edge_lengths=lengths[emask],
            resolution=int(resolution),
            neighbor_factor=float(neighbor_factor),
            exclusion=exclusion,
            excluded_volume_estimate=excluded_volume + dropped_vol,
            dropped_components=int(ncomp - 1),
            quad_anchor=sub_anchor,
        )
    return mesh


def reweight_mesh(mesh: SphereMesh, field) -> SphereMesh:
    """Same node set and edges, lengths and areas recomputed for a new field.

    Comparing two nearby fields on one shared graph turns their landmark
    distance matrices into an exact correspondence, so a Gromov-Hausdorff
    upper bound between them measures the field difference alone rather
    than independent discretization jitter.  Quadrature follows the same
    chart segments the original build used, including seam edges, and
    grading reuses the original exclusion radii at the new singular
    positions (nearby by assumption).
    """
    if mesh.quad_anchor is None:
        raise ValueError("mesh carries no quadrature anchors; rebuild it")
    chart_sing = []
    for chart in (0, 1):
        entries = field.chart_singular(chart)
        pos = np.array([z for z, _ in entries], dtype=complex)
        old = [
            (z, v["chart_radius"])
            for (c, z), v in mesh.exclusion.items()
            if c == chart
        ]
        sigma = np.empty(pos.size)
        for k, z in enumerate(pos):
            if old:
                sigma[k] = min(old, key=lambda item: abs(item[0] - z))[1]
            else:
                sigma[k] = 1e-8
        chart_sing.append((pos, sigma))

    e0, e1 = mesh.edges[:, 0], mesh.edges[:, 1]
    anchor = mesh.quad_anchor
    lengths = np.zeros(e0.size)
    for chart in (0, 1):
        pos_s, sig_s = chart_sing[chart]
        within = (anchor < 0) & (mesh.chart[e0] == chart)
        if within.any():
            lengths[within] = _segment_quadrature(
                field, chart, mesh.pos[e0[within]], mesh.pos[e1[within]],
                pos_s, sig_s,
            )
        rows = np.nonzero(anchor >= 0)[0]
        rows = rows[mesh.chart[anchor[rows]] == chart]
        if rows.size:
            gb = anchor[rows]
            other = np.where(e0[rows] == gb, e1[rows], e0[rows])
            lengths[rows] = _segment_quadrature(
                field, chart, 1.0 / mesh.pos[other], mesh.pos[gb],
                pos_s, sig_s,
            )
    if not np.all(np.isfinite(lengths)) or (lengths < 0).any():
        raise RuntimeError("mesh edge quadrature produced invalid lengths")

    areas = np.empty(mesh.n_nodes)
    for chart in (0, 1):
        m = mesh.chart == chart
        if m.any():
            areas[m] = _cell_areas(
                field, chart, mesh.pos[m], mesh.half[m], *chart_sing[chart]
            )
    return SphereMesh(
        field=field,
        chart=mesh.chart,
        pos=mesh.pos,
        half=mesh.half,
        owned=mesh.owned,
        cell_areas=areas,
        edges=mesh.edges,
        edge_lengths=lengths,
        resolution=mesh.resolution,
        neighbor_factor=mesh.neighbor_factor,
        exclusion=mesh.exclusion,
        excluded_volume_estimate=mesh.excluded_volume_estimate,
        dropped_components=mesh.dropped_components,
        quad_anchor=mesh.quad_anchor,
    )


# ---------------------------------------------------------------------------
# metric measurements


def _node_for(mesh: SphereMesh, p) -> int:
    if isinstance(p, (int, np.integer)):
        k = int(p)
        if not 0 <= k < mesh.n_nodes:
            raise ValueError(f"node index {k} out of range")
        return k
    if isinstance(p, tuple):
        chart, z = p
        sel = np.nonzero(mesh.chart == chart)[0]
        if sel.size == 0:
            raise ValueError("no nodes in requested chart")
        return int(sel[np.argmin(np.abs(mesh.pos[sel] - complex(z)))])
    z = complex(p)
    if abs(z) <= 1.0:
        return _node_for(mesh, (0, z))
    return _node_for(mesh, (1, 1.0 / z))


def shortest_distances(mesh: SphereMesh, sources) -> np.ndarray:
    """Graph distances from each source node to every node."""
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    return csgraph.dijkstra(mesh.graph(), indices=sources)


@dataclass
class MetricSummary:
    """Landmark digest of a mesh: diameter, volume, pairwise distances."""

    diameter: float
    total_volume: float
    landmark_ids: np.ndarray
    distances: np.ndarray
    unit_diameter_scale: float

    def __post_init__(self):
        d = self.distances
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("landmark matrix must be square")
        if not np.allclose(d, d.T, atol=1e-9 * max(1.0, self.diameter)):
            raise ValueError("landmark matrix must be symmetric")
        if not np.allclose(np.diag(d), 0.0):
            raise ValueError("landmark matrix must have zero diagonal")

    def to_dict(self) -> dict:
        return {
            "diameter": self.diameter,
            "total_volume": self.total_volume,
            "unit_diameter_scale": self.unit_diameter_scale,
            "landmark_count": int(self.landmark_ids.size),
            "landmarks": [int(k) for k in self.landmark_ids],
            "distances": [[float(v) for v in row] for row in self.distances],
        }


def summarize(mesh: SphereMesh, landmarks: int = 64,
              stability: float = 0.005) -> MetricSummary:
    """Landmark summary; landmark count doubles until the diameter is stable.

    Landmarks are chosen by farthest-point sampling from the node nearest
    the chart-0 origin, so results are deterministic for a given mesh.
    The diameter is the saturated max over landmark-to-node distances.
    """
    if mesh._summary is not None and mesh._summary.landmark_ids.size >= min(
        landmarks, mesh.n_nodes
    ):
        return mesh._summary
    n = mesh.n_nodes
    start = _node_for(mesh, (0, 0j))
    ids = [start]
    rows = [mesh.distances_from(start)]
    d_to_set = rows[0].copy()
    k = min(landmarks, n)
    diam_prev = None
    while True:
        while len(ids) < k:
            nxt = int(np.argmax(d_to_set))
            if d_to_set[nxt] <= 0:
                break
            ids.append(nxt)
            rows.append(mesh.distances_from(nxt))
            np.minimum(d_to_set, rows[-1], out=d_to_set)
        diam = float(max(r.max() for r in rows))
        saturated = len(ids) < k or len(ids) >= n
        stable = diam_prev is not None and abs(diam - diam_prev) <= stability * max(
            diam, 1e-300
        )
        if saturated or stable:
            break
        diam_prev = diam
        k = min(2 * k, n)
    ids_arr = np.array(ids, dtype=np.int64)
    mat = np.array([r[ids_arr] for r in rows])
    mat = 0.5 * (mat + mat.T)
    np.fill_diagonal(mat, 0.0)
    summary = MetricSummary(
        diameter=diam,
        total_volume=mesh.total_cell_volume,
        landmark_ids=ids_arr,
        distances=mat,
        unit_diameter_scale=1.0 / diam if diam > 0 else 1.0,
    )
    mesh._summary = summary
    return summary


def diameter(mesh: SphereMesh) -> float:
    """Saturated landmark estimate of the metric diameter."""
    return summarize(mesh).diameter


def ball_volume(mesh: SphereMesh, p, r: float) -> float:
    """Volume of the metric ball of radius r about a node.

    A cell straddling the ball boundary contributes the covered fraction
    of its area, ramping linearly across the cell's own metric width, so
    the estimate varies smoothly in r even where grading leaves single
    cells carrying a visible share of a ball (deep funnel shafts).
    """
    if not r > 0:
        raise ValueError("ball radius must be positive")
    src = _node_for(mesh, p)
    row = mesh.distances_from(src)
    own = mesh.owned
    areas = mesh.cell_areas[own]
    width = np.sqrt(areas)
    frac = np.clip(
        (r - row[own]) / np.where(width > 0, width, 1.0) + 0.5, 0.0, 1.0
    )
    return float(np.dot(areas, frac))


def bishop_gromov_ratio(mesh: SphereMesh, p, r1: float, r2: float) -> float:
    """vol(B_r1) / vol(B_r2); nonnegative curvature keeps it at or above
    the flat benchmark (r1/r2)^2."""
    if not 0 < r1 < r2:
        raise ValueError("radii must satisfy 0 < r1 < r2")
    v2 = ball_volume(mesh, p, r2)
    if v2 <= 0:
        raise ValueError("outer ball carries no volume")
    return ball_volume(mesh, p, r1) / v2


def total_volume(field, tol: float = 1e-2, max_rounds: int = 2000,
                 max_cells: int = 400000) -> float:
    """Metric area of the whole sphere by adaptive two-chart quadrature.

    The charts are blended with a partition of unity supported on the
    seam annulus, and cells split until the Gauss-Legendre 2x2 vs 3x3
    disagreement falls below tol relative to the running total.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    witness = _non_minimal_witness(field, 1e-4 * _diameter_proxy(field))
    if witness is not None:
        raise NonMinimalError(
            f"pair is non-minimal at {witness!r}; total volume is infinite"
        )
    gx2, gw2 = np.polynomial.legendre.leggauss(2)
    gx3, gw3 = np.polynomial.legendre.leggauss(3)

    def cell_eval(chart, centers, halves):
        val2 = np.zeros(centers.size)
        val3 = np.zeros(centers.size)
        for gx, gw, acc in ((gx2, gw2, val2), (gx3, gw3, val3)):
            for iy in range(gx.size):
                for ix in range(gx.size):
                    pts = centers + halves * (gx[ix] + 1j * gx[iy])
                    rho = _rho_safe(field, pts, chart, 1e-9 * halves)
                    w = _overlap_weight(np.abs(pts))
                    acc += gw[ix] * gw[iy] * rho * w * halves**2
        return val3, np.abs(val3 - val2)

    chart_parts, c_parts, h_parts, v_parts, e_parts = [], [], [], [], []
    for chart in (0, 1):
        base = (np.arange(8) - 3.5) * (_CHART_SPAN / 4.0)
        cx, cy = np.meshgrid(base, base)
        centers = (cx + 1j * cy).ravel()
        halves = np.full(centers.size, _CHART_SPAN / 8.0)
        keep = np.abs(centers) - 1.415 * halves <= _CHART_SPAN
        centers, halves = centers[keep], halves[keep]
        val, err = cell_eval(chart, centers, halves)
        chart_parts.append(np.full(centers.size, chart, dtype=np.int8))
        c_parts.append(centers)
        h_parts.append(halves)
        v_parts.append(val)
        e_parts.append(err)
    chart_a = np.concatenate(chart_parts)
    c_a = np.concatenate(c_parts)
    h_a = np.concatenate(h_parts)
    v_a = np.concatenate(v_parts)
    e_a = np.concatenate(e_parts)

    for _ in range(max_rounds):
        total = float(v_a.sum())
        err_total = float(e_a.sum())
        target = 0.5 * tol * max(abs(total), 1e-300)
        if err_total <= target:
            return total
        theta = target / max(64, c_a.size)
        split = e_a > theta
        if not split.any():
            split = e_a >= 0.5 * float(e_a.max())
        if c_a.size + 3 * int(split.sum()) > max_cells:
            raise RuntimeError("volume quadrature exceeded its cell budget")
        new_chart, new_c, new_h, new_v, new_e = [], [], [], [], []
        for chart in (0, 1):
            m = split & (chart_a == chart)
            if not m.any():
                continue
            q = 0.5 * h_a[m]
            offs = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j])
            kids = (c_a[m][:, None] + q[:, None] * offs[None, :]).ravel()
            kh = np.repeat(q, 4)
            val, err = cell_eval(chart, kids, kh)
            new_chart.append(np.full(kids.size, chart, dtype=np.int8))
            new_c.append(kids)
            new_h.append(kh)
            new_v.append(val)
            new_e.append(err)
        keepm = ~split
        chart_a = np.concatenate([chart_a[keepm]] + new_chart)
        c_a = np.concatenate([c_a[keepm]] + new_c)
        h_a = np.concatenate([h_a[keepm]] + new_h)
        v_a = np.concatenate([v_a[keepm]] + new_v)
        e_a = np.concatenate([e_a[keepm]] + new_e)
    raise RuntimeError("volume quadrature did not converge")


def curvature_fd(field, t, h: float, chart: int = 0) -> float:
    """Gauss curvature K = -Lap(log rho)/(2 rho) by a 5-point stencil.

    Requires t to sit at chart distance at least 10 h from every singular
    point with a finite image in this chart.
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    t = complex(t)
    for z, _ in field.chart_singular(chart, span=math.inf):
        if abs(t - z) < 10.0 * h:
            raise ValueError("stencil sits within 10 h of a singular point")
    pts = np.array([t, t + h, t - h, t + 1j * h, t - 1j * h])
    lm = field.log_mu_many(pts, chart)
    if not np.all(np.isfinite(lm)):
        raise ValueError("stencil hit a singular fiber")
    lap = (lm[1] + lm[2] + lm[3] + lm[4] - 4.0 * lm[0]) / h**2
    rho0 = getattr(field, "normalization", 1.0) * math.exp(lm[0])
    return float(-lap / (2.0 * rho0))


# ---------------------------------------------------------------------------
# flat model spaces


@dataclass(frozen=True)
class FlatOrbifold:
    """Quotient of a unit-covolume flat torus R^n / lattice by x -> -x.

    basis rows generate the lattice; the determinant must be 1 within
    1e-12 so diameters are comparable across payloads.
    """

    dim: int
    basis: np.ndarray

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError("orbifold dimension must be 2 or 3")
        b = np.asarray(self.basis, dtype=float)
        if b.shape != (self.dim, self.dim):
            raise ValueError("basis must be a square matrix of the given dim")
        det = float(np.linalg.det(b))
        if abs(det - 1.0) > 1e-12:
            raise ValueError(f"basis determinant must be 1, got {det!r}")
        object.__setattr__(self, "basis", b)


def _lattice_box(basis: np.ndarray, radius: int) -> np.ndarray:
    dim = basis.shape[0]
    rng = np.arange(-radius, radius + 1)
    grids = np.meshgrid(*([rng] * dim), indexing="ij")
    lam = np.stack([g.ravel() for g in grids], axis=1)
    return lam @ basis


def _min_dist_mod_lattice(orb: FlatOrbifold, v: np.ndarray) -> float:
    """min over lattice translates of |v - l|, with a box certificate."""
    b = orb.basis
    coeff = np.linalg.solve(b.T, v)
    v0 = v - np.round(coeff) @ b
    smin = float(np.linalg.svd(b, compute_uv=False)[-1])
    norm0 = float(np.linalg.norm(v0))
    for radius in (3, 6, 12):
        pts = _lattice_box(b, radius)
        d = float(np.min(np.linalg.norm(v0[None, :] - pts, axis=1)))
        # any coefficient vector outside the box has euclidean norm at
        # least radius + 1, hence lattice length > (radius + 1) * smin
        if (radius + 1) * smin - norm0 > d:
            return d
    raise RuntimeError("lattice too skew to certify a shortest vector")


def flat_orbifold_distance(orb: FlatOrbifold, x, y) -> float:
    """Distance in the quotient: min over the sign and lattice actions."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != (orb.dim,) or y.shape != (orb.dim,):
        raise ValueError("points must be vectors of the orbifold dimension")
    return min(
        _min_dist_mod_lattice(orb, x - y),
        _min_dist_mod_lattice(orb, x + y),
    )


def _reduced_pair_dists(basis: np.ndarray, diffs: np.ndarray) -> np.ndarray:
    """Distances to the lattice for an array of difference vectors."""
    coeff = diffs @ np.linalg.inv(basis)
    v0 = diffs - np.round(coeff) @ basis
    cand = _lattice_box(basis, 1)
    return np.min(
        np.linalg.norm(v0[:, None, :] - cand[None, :, :], axis=2), axis=1
    )


def flat_orbifold_diameter(orb: FlatOrbifold, grid: int = 16) -> float:
    """Diameter by maximizing the lattice distance over a fundamental grid.

    The quotient diameter equals the covering radius of the lattice: for
    any vector w the pair x = w + h, y = h with 2h in the lattice has
    both x - y and x + y congruent to w, so the deepest hole is realized
    as a pair distance.  The estimate is Lipschitz-accurate to about the
    grid cell diagonal; refine the grid and compare runs to bound the
    error.
    """
    if grid < 4:
        raise ValueError("grid must be at least 4")
    axes = [np.arange(grid) / grid for _ in range(orb.dim)]
    mesh = np.meshgrid(*axes, indexing="ij")
    coeffs = np.stack([m.ravel() for m in mesh], axis=1)
    pts = coeffs @ orb.basis
    best = 0.0
    chunk = 200000
    for k in range(0, pts.shape[0], chunk):
        d = _reduced_pair_dists(orb.basis, pts[k : k + chunk])
        best = max(best, float(d.max()))
    return best


@dataclass(frozen=True)
class SegmentSpace:
    """The unit segment, the collapsed limit of semistable degenerations."""

    length: float = 1.0

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("segment length must be positive")

    def distance(self, x: float, y: float) -> float:
        for v in (x, y):
            if not 0.0 <= v <= self.length:
                raise ValueError("points must lie on the segment")
        return abs(float(x) - float(y))


# ---------------------------------------------------------------------------
# landmark-matrix comparisons


def gh_upper_bound(d1, d2) -> float:
    """Half the sup-difference of two landmark matrices under the identity
    correspondence; an upper bound for the Gromov-Hausdorff distance of
    the landmark sets, not an estimate of the true distance."""
    a = np.asarray(d1, dtype=float)
    b = np.asarray(d2, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("landmark matrices must be square and of equal shape")
    return 0.5 * float(np.max(np.abs(a - b)))


def segment_fit(summary: MetricSummary) -> tuple[float, float]:
    """(length, deviation) of the best segment fit to a landmark matrix.

    Distances are rescaled to unit diameter.  f(x) = d(x0, x) from an
    extremal landmark parameterizes the candidate segment; the deviation
    is half the worst violation of |f(x) - f(y)| = d(x, y).  Exact
    segments score 0; round spheres score near 1/2.
    """
    d = summary.distances * summary.unit_diameter_scale
    if d.shape[0] < 2:
        raise ValueError("segment fit needs at least two landmarks")
    x0 = int(np.argmax(d.max(axis=1)))
    f = d[x0]
    deviation = 0.5 * float(np.max(np.abs(d - np.abs(f[:, None] - f[None, :]))))
    return float(f.max()), deviation

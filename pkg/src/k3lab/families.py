"""Degeneration families: parameter grids, per-step records, and emission.

A family is a path of Weierstrass data (coefficients given as exact
polynomial templates in the grid parameter) or a flow of period frames.
Running a family classifies every step, summarizes the metric where one
exists, bridges consecutive steps with Gromov-Hausdorff upper bounds on
a shared node set, and evaluates the family's named checks.  Records
serialize deterministically: repeated runs of the same configuration
emit byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field as dataclass_field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import modular
from .config import ExperimentConfig
from .kemetric import (
    ConformalFactorField,
    build_mesh,
    gh_upper_bound,
    reweight_mesh,
    segment_fit,
    summarize,
)
from .lattice import E8_TYPE, GAMMA16_TYPE, standard_gram
from .satake import (
    ClassifyThresholds,
    PeriodFrame,
    diagonal_flow,
    classify_sequence,
    phi_realize,
    reference_frame,
    triangularize,
)
from .weierstrass import (
    StabilityClass,
    WeierstrassData,
    classify_stability,
    group_act,
)

__all__ = [
    "FamilySpec",
    "RunRecord",
    "run_family",
    "builtin_cases",
    "emit",
    "record_row",
    "PASS",
    "FAIL",
    "INDETERMINATE",
]

SCHEMA_VERSION = "1"

PASS = "pass"
FAIL = "fail"
INDETERMINATE = "indeterminate"

_H8_ROWS = 9
_H12_ROWS = 13

_STEP_CHECKS = ("conformal_ratio", "annulus_constancy", "orbit_class_constant")
_FINAL_CHECKS = (
    "gh_decreasing",
    "collapse_volume",
    "segment_deviation",
    "limit_polystable",
    "boundary_type",
)


def _as_exact(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    raise TypeError(f"template entries must be integers or fractions, got {value!r}")


@dataclass(frozen=True)
class FamilySpec:
    """One degeneration path: grid, step generator, and named checks.

    For kind "weierstrass" the coefficient of t^k in each section is the
    polynomial sum_j template[k][j] * parameter^j with exact rational
    entries, so every step datum is exact.  For kind "frames" each step
    is the reference frame pushed by diagonal_flow with the three rates
    scaled by the parameter, and the sequence as a whole is classified.
    """

    name: str
    kind: str
    parameters: tuple
    h8_template: tuple = ()
    h12_template: tuple = ()
    flow_rates: tuple = ()
    checks: tuple = ()
    options: dict = dataclass_field(default_factory=dict)

    def __post_init__(self):
        if not self.name or not isinstance(self.name, str):
            raise ValueError("family name must be a non-empty string")
        if self.kind not in ("weierstrass", "frames"):
            raise ValueError(f"unknown family kind {self.kind!r}")
        object.__setattr__(self, "parameters", tuple(self.parameters))
        if not self.parameters:
            raise ValueError("family parameter grid is empty")
        object.__setattr__(self, "checks", tuple(self.checks))
        known = set(_STEP_CHECKS) | set(_FINAL_CHECKS)
        for name in self.checks:
            if name not in known:
                raise ValueError(f"unknown check name {name!r}")
        if self.kind == "weierstrass":
            h8 = tuple(tuple(_as_exact(c) for c in row) for row in self.h8_template)
            h12 = tuple(tuple(_as_exact(c) for c in row) for row in self.h12_template)
            if not h8 or not h12:
                raise ValueError("weierstrass family requires both templates")
            if len(h8) > _H8_ROWS:
                raise ValueError("h8 template exceeds the degree-8 cap")
            if len(h12) > _H12_ROWS:
                raise ValueError("h12 template exceeds the degree-12 cap")
            object.__setattr__(self, "h8_template", h8)
            object.__setattr__(self, "h12_template", h12)
            for p in self.parameters:
                _as_exact(p)
        else:
            rates = tuple(float(r) for r in self.flow_rates)
            if len(rates) != 3:
                raise ValueError("frames family requires three flow rates")
            object.__setattr__(self, "flow_rates", rates)

    def datum(self, parameter) -> WeierstrassData:
        """Exact Weierstrass datum at one parameter value."""
        if self.kind != "weierstrass":
            raise ValueError("only weierstrass families carry data")
        p = _as_exact(parameter)
        h8 = [sum((c * p**j for j, c in enumerate(row)), Fraction(0))
              for row in self.h8_template]
        h12 = [sum((c * p**j for j, c in enumerate(row)), Fraction(0))
               for row in self.h12_template]
        data = WeierstrassData.from_coefficients(h8, h12)
        base = self.options.get("sl2_diag_base")
        if base is not None:
            if p == 0:
                return data
            base_data = WeierstrassData.from_coefficients(
                [_as_exact(c) for c in base[0]], [_as_exact(c) for c in base[1]]
            )
            acted = group_act(base_data, [[p, 0], [0, Fraction(1) / p]])
            if (acted.h8.coefficients != data.h8.coefficients
                    or acted.h12.coefficients != data.h12.coefficients):
                raise ValueError(
                    "template step disagrees with the group-action path"
                )
        return data


@dataclass
class RunRecord:
    """Everything measured at one family step."""

    parameter: str
    parameter_float: float
    stability: dict | None = None
    metric: dict | None = None
    coordinates: dict | None = None
    gh_to_previous: float | None = None
    checks: dict = dataclass_field(default_factory=dict)
    wall_time_s: float = 0.0
    error: str | None = None


def _check(status: str, value=None, detail: str = "") -> dict:
    return {"status": status, "value": value, "detail": detail}


def _stability_digest(report) -> dict:
    nf = report.polystable_normal_form
    return {
        "class": report.cls.value,
        "polystable": report.polystable,
        "witness_count": len(report.witnesses),
        "delta_identically_zero": report.delta_identically_zero,
        "normal_form": None if nf is None else f"[{nf[0]} : {nf[1]}]",
    }


def _metric_digest(summary) -> dict:
    return {
        "diameter": summary.diameter,
        "total_volume": summary.total_volume,
        "unit_diameter_volume": summary.total_volume * summary.unit_diameter_scale**2,
        "landmark_count": int(summary.landmark_ids.size),
    }


def _eval_sections(data: WeierstrassData, t: complex) -> tuple[complex, complex]:
    num = data.to_numeric()
    return num.h8.evaluate(t), num.h12.evaluate(t)


def _shared_landmark_gh(prev_mesh, prev_summary, field) -> float:
    """GH upper bound between the previous step and the current field.

    The previous step's mesh graph is re-weighted under the current
    field, so the previous landmarks index both metric spaces directly.
    """
    rew = reweight_mesh(prev_mesh, field)
    ids = prev_summary.landmark_ids
    rows = np.array([rew.distances_from(int(i))[ids] for i in ids])
    mat = 0.5 * (rows + rows.T)
    np.fill_diagonal(mat, 0.0)
    return gh_upper_bound(prev_summary.distances, mat)


def _conformal_ratio_check(field, data, cfg: ExperimentConfig, opts: dict) -> dict:
    """Deviation of rho * 3|h12|^(1/3) / (2 pi^2 log+ |j|) from one."""
    pts = opts.get("probe_points", (3 + 0.5j, 0.5 + 0.3j, 1.5 + 0.4j))
    worst = 0.0
    for t in pts:
        a, b = _eval_sections(data, complex(t))
        lp = modular.log_plus(abs(modular.j_from_ab(a, b)))
        if not lp > 0:
            return _check(FAIL, None, f"log+|j| vanishes at probe {t}")
        ratio = field.rho(complex(t)) * 3.0 * abs(b) ** (1.0 / 3.0)
        ratio /= 2.0 * math.pi**2 * lp
        if not math.isfinite(ratio):
            return _check(FAIL, None, f"ratio not finite at probe {t}")
        worst = max(worst, abs(ratio - 1.0))
    if worst <= cfg.ratio_band:
        status = PASS
    elif worst <= 0.5:
        status = INDETERMINATE
    else:
        status = FAIL
    return _check(status, worst, f"max deviation over {len(tuple(pts))} probes")


def _annulus_constancy_check(field, data, cfg: ExperimentConfig, opts: dict) -> dict:
    """Spread of rho |t|^2 / log+ |j| over the cylinder annulus.

    The annulus starts at three times the outermost h8 root, where the
    limiting flat-cylinder shape of the metric should already hold.
    """
    num = data.to_numeric()
    coeffs = np.array(num.h8.coefficients, dtype=complex)
    if coeffs.size > 1:
        roots = np.roots(coeffs[::-1])
        inner = 3.0 * float(np.max(np.abs(roots))) if roots.size else 0.0
    else:
        inner = 0.0
    outer = float(opts.get("annulus_outer", 0.3))
    if inner >= outer:
        return _check(
            INDETERMINATE, None,
            f"annulus is empty: inner {inner:.4f} >= outer {outer:.4f}",
        )
    radii = np.geomspace(max(inner, 1e-12), outer, 8)
    angles = np.exp(2j * np.pi * np.arange(16) / 16.0)
    pts = (radii[:, None] * angles[None, :]).ravel()
    rho = field.rho_many(pts)
    vals = []
    for t, r in zip(pts, rho):
        a, b = _eval_sections(data, t)
        lp = modular.log_plus(abs(modular.j_from_ab(a, b)))
        if not (lp > 0 and math.isfinite(r)):
            return _check(FAIL, None, f"density or j degenerate at {t}")
        vals.append(r * abs(t) ** 2 / lp)
    spread = max(vals) / min(vals) - 1.0
    status = PASS if spread <= cfg.annulus_band else FAIL
    return _check(status, spread, f"max/min - 1 over [{inner:.4f}, {outer}]")


def _orbit_class_check(report) -> dict:
    ok = (report.cls is StabilityClass.SEMISTABLE_NOT_STABLE
          and not report.polystable)
    detail = f"{report.cls.value}, polystable={report.polystable}"
    return _check(PASS if ok else FAIL, None, detail)


def _gh_decreasing_check(records) -> dict:
    vals = [r.gh_to_previous for r in records[1:]]
    if not vals or any(v is None for v in vals):
        return _check(INDETERMINATE, None, "missing cross-step bounds")
    if not all(math.isfinite(v) for v in vals):
        return _check(FAIL, None, "non-finite cross-step bound")
    decreasing = all(b < a for a, b in zip(vals, vals[1:]))
    detail = "bounds " + ", ".join(f"{v:.3e}" for v in vals)
    if len(vals) < 2:
        return _check(INDETERMINATE, vals[-1], detail + " (need two gaps)")
    return _check(PASS if decreasing else FAIL, vals[-1], detail)


def _collapse_volume_check(records, cfg: ExperimentConfig) -> dict:
    vals = []
    for r in records:
        if r.metric is None:
            return _check(INDETERMINATE, None, "a step has no metric summary")
        vals.append(r.metric["unit_diameter_volume"])
    decreasing = all(b < a for a, b in zip(vals, vals[1:]))
    ok = decreasing and vals[-1] < cfg.collapse_volume_bound
    detail = "unit volumes " + ", ".join(f"{v:.4f}" for v in vals)
    return _check(PASS if ok else FAIL, vals[-1], detail)


def _segment_deviation_check(summary, cfg: ExperimentConfig) -> dict:
    if summary is None:
        return _check(INDETERMINATE, None, "final step has no metric summary")
    length, dev = segment_fit(summary)
    status = PASS if dev <= cfg.segment_deviation_bound else FAIL
    return _check(status, dev, f"best segment length {length:.3f}")


def _limit_polystable_check(spec: FamilySpec, cfg: ExperimentConfig) -> dict:
    expected = spec.options.get("limit_normal_form")
    datum = spec.datum(0)
    report = classify_stability(datum, cfg.cluster_tol)
    digest = _stability_digest(report)
    detail = f"limit datum: {digest['class']}, normal form {digest['normal_form']}"
    if report.cls is not StabilityClass.SEMISTABLE_NOT_STABLE or not report.polystable:
        return _check(FAIL, None, detail)
    if expected is not None:
        nf = report.polystable_normal_form
        want = tuple(_as_exact(v) for v in expected)
        got = tuple(complex(v) for v in nf)
        if any(abs(g - complex(w)) > 1e-12 * max(1.0, abs(complex(w)))
               for g, w in zip(got, want)):
            return _check(FAIL, None, detail + f", expected [{want[0]} : {want[1]}]")
    return _check(PASS, None, detail)


def _boundary_type_check(spec: FamilySpec, coords, cfg: ExperimentConfig) -> dict:
    thresholds = ClassifyThresholds(
        divergence=cfg.divergence_threshold,
        variation=cfg.variation_bound,
        siegel_bound=cfg.siegel_bound,
    )
    kind = spec.options.get("lattice_kind", E8_TYPE)
    verdict = classify_sequence(coords, thresholds, lattice_kind=kind)
    detail = f"classified {verdict.btype} over {kind}"
    if verdict.btype in ("TypeB", "TypeC", "TypeD"):
        real = phi_realize(verdict, orbifold_grid=cfg.orbifold_grid)
        detail += f"; realized as {real.kind} at scale {real.scale:.6f}"
    expected = spec.options.get("expected_type")
    if expected is None:
        return _check(INDETERMINATE, None, detail)
    return _check(PASS if verdict.btype == expected else FAIL, None, detail)


def run_family(spec: FamilySpec, cfg: ExperimentConfig | None = None) -> list[RunRecord]:
    """Run every step of a family and return its records in grid order.

    Steps that raise are recorded with the error and the run continues,
    unless the configuration is strict.  All numbers are deterministic
    functions of the spec and configuration.
    """
    if cfg is None:
        cfg = ExperimentConfig()
    records: list[RunRecord] = []
    prev_mesh = prev_summary = None
    last_summary = None
    coords_seq = []
    resolution = int(spec.options.get("mesh_resolution", cfg.mesh_resolution))
    want_metric = bool(spec.options.get("metric", spec.kind == "weierstrass"))

    for p in spec.parameters:
        t0 = time.perf_counter()
        rec = RunRecord(parameter=str(p), parameter_float=float(p))
        try:
            if spec.kind == "weierstrass":
                data = spec.datum(p)
                report = classify_stability(data, cfg.cluster_tol)
                rec.stability = _stability_digest(report)
                field = None
                needs_field = want_metric or any(
                    c in spec.checks
                    for c in ("conformal_ratio", "annulus_constancy")
                )
                if needs_field:
                    field = ConformalFactorField(data, tol=cfg.cluster_tol)
                if want_metric:
                    if report.cls is not StabilityClass.STABLE:
                        raise ValueError(
                            "metric summary needs a stable datum, got "
                            + report.cls.value
                        )
                    mesh = build_mesh(
                        field,
                        resolution=resolution,
                        neighbor_factor=cfg.neighbor_factor,
                    )
                    summary = summarize(mesh, cfg.landmarks)
                    rec.metric = _metric_digest(summary)
                    if prev_mesh is not None:
                        rec.gh_to_previous = _shared_landmark_gh(
                            prev_mesh, prev_summary, field
                        )
                    prev_mesh, prev_summary = mesh, summary
                    last_summary = summary
                for name in spec.checks:
                    if name == "conformal_ratio":
                        rec.checks[name] = _conformal_ratio_check(
                            field, data, cfg, spec.options
                        )
                    elif name == "annulus_constancy":
                        rec.checks[name] = _annulus_constancy_check(
                            field, data, cfg, spec.options
                        )
                    elif name == "orbit_class_constant":
                        rec.checks[name] = _orbit_class_check(report)
            else:
                rate_a, rate_b, rate_c = spec.flow_rates
                kind = spec.options.get("lattice_kind", E8_TYPE)
                basis = standard_gram(kind)
                ref = reference_frame(basis)
                flow = diagonal_flow(
                    rate_a * float(p), rate_b * float(p), rate_c * float(p)
                )
                frame = PeriodFrame(flow @ ref.matrix, basis)
                coords = triangularize(frame)
                coords_seq.append(coords)
                rec.coordinates = {"a": coords.a, "b": coords.b, "c": coords.c}
        except Exception as exc:
            if cfg.strict:
                raise
            rec.error = f"{type(exc).__name__}: {exc}"
        rec.wall_time_s = time.perf_counter() - t0
        records.append(rec)

    final = records[-1]
    for name in spec.checks:
        if name == "gh_decreasing":
            final.checks[name] = _gh_decreasing_check(records)
        elif name == "collapse_volume":
            final.checks[name] = _collapse_volume_check(records, cfg)
        elif name == "segment_deviation":
            final.checks[name] = _segment_deviation_check(last_summary, cfg)
        elif name == "limit_polystable":
            final.checks[name] = _limit_polystable_check(spec, cfg)
        elif name == "boundary_type":
            try:
                final.checks[name] = _boundary_type_check(spec, coords_seq, cfg)
            except Exception as exc:
                if cfg.strict:
                    raise
                final.checks[name] = _check(
                    FAIL, None, f"{type(exc).__name__}: {exc}"
                )
    return records


def builtin_cases() -> tuple[FamilySpec, ...]:
    """The five standing degeneration experiments, in canonical order."""
    one = Fraction(1)
    return (
        FamilySpec(
            name="smooth-perturbation",
            kind="weierstrass",
            parameters=tuple(Fraction(1, 10**k) for k in (2, 3, 4, 5)),
            # target (t^8 + t + 1, t^12 + 2t + 3) plus a fixed perturbation
            # scaled by the parameter; all steps are smooth and stable
            h8_template=((1, 1), (one,), (), (0, 2), (), (), (), (0, 1), (one,)),
            h12_template=((3,), (2, 1), (), (), (), (0, 1), (), (), (), (), (),
                          (), (one,)),
            checks=("gh_decreasing",),
            options={"metric": True, "mesh_resolution": 12},
        ),
        FamilySpec(
            name="conformal-scaling",
            kind="weierstrass",
            parameters=tuple(Fraction(1, 10**k) for k in (2, 4, 6, 8, 10)),
            # (3 G4^2 + eps, G4^3) for G4 = -t(t-1)(t-2)(t-5); the metric
            # should approach the pullback density 2 pi^2 log+|j| / (3 |G4|)
            h8_template=_scaled_square_template(),
            h12_template=_cube_template(),
            checks=("conformal_ratio",),
            options={"metric": False},
        ),
        FamilySpec(
            name="interval-collapse",
            kind="weierstrass",
            parameters=tuple(Fraction(1, 10**k) for k in (4, 6, 8)),
            # (t^4 + p^8, t^6 + p^8 t^7): the unit-diameter volume drains
            # as the family approaches the non-minimal point at the origin
            h8_template=((0,) * 8 + (one,), (), (), (), (one,)),
            h12_template=((), (), (), (), (), (), (one,), (0,) * 8 + (one,)),
            checks=("collapse_volume", "segment_deviation"),
            options={"metric": True, "mesh_resolution": 16},
        ),
        FamilySpec(
            name="cylinder-rescale",
            kind="weierstrass",
            parameters=tuple(Fraction(1, 10**k) for k in (2, 4, 6, 8, 10)),
            # (3 t^4 + eps, t^6) has one bad point at infinity; on the
            # annulus between the h8 roots and the outer scale, the metric
            # is a flat cylinder after dividing by log(1/eps)
            h8_template=((0, 1), (), (), (), (3,)),
            h12_template=((), (), (), (), (), (), (one,)),
            checks=("annulus_constancy", "limit_polystable"),
            options={"metric": False, "limit_normal_form": (27, 27)},
        ),
        FamilySpec(
            name="orbit-limit",
            kind="weierstrass",
            parameters=tuple(Fraction(1, 10**k) for k in (1, 2, 3)),
            # diag(s, 1/s) acting on (t^4, t^6 + t^7): each step stays
            # semistable and non-polystable; the limit lands on (t^4, t^6)
            h8_template=((), (), (), (), (one,)),
            h12_template=((), (), (), (), (), (), (one,), (0, 0, 1)),
            checks=("orbit_class_constant", "limit_polystable"),
            options={
                "metric": False,
                "limit_normal_form": (1, 1),
                "sl2_diag_base": ((0, 0, 0, 0, 1), (0, 0, 0, 0, 0, 0, 1, 1)),
            },
        ),
    )


def _poly_mul(a, b):
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += Fraction(x) * Fraction(y)
    return out


def _g4_coeffs():
    return [Fraction(c) for c in (0, 10, -17, 8, -1)]


def _scaled_square_template():
    sq = _poly_mul(_g4_coeffs(), _g4_coeffs())
    rows = [(3 * c,) if c else () for c in sq]
    rows[0] = (3 * sq[0], Fraction(1))
    return tuple(rows)


def _cube_template():
    cu = _poly_mul(_poly_mul(_g4_coeffs(), _g4_coeffs()), _g4_coeffs())
    return tuple((c,) if c else () for c in cu)


# ---------------------------------------------------------------------------
# emission

_BASE_COLUMNS = (
    "parameter",
    "parameter_float",
    "stability_class",
    "polystable",
    "delta_identically_zero",
    "witness_count",
    "normal_form",
    "diameter",
    "total_volume",
    "unit_diameter_volume",
    "landmark_count",
    "coord_a",
    "coord_b",
    "coord_c",
    "gh_to_previous",
)

_NUMERIC_COLUMNS = (
    "parameter_float",
    "diameter",
    "total_volume",
    "unit_diameter_volume",
    "coord_a",
    "coord_b",
    "coord_c",
    "gh_to_previous",
)


def _pin(value, fmt: str):
    if isinstance(value, float):
        return float(format(value, fmt))
    return value


def record_row(rec: RunRecord, float_format: str = ".17g") -> dict:
    """Flat string-valued row for one record, in stable column order."""
    row = {}
    st = rec.stability or {}
    me = rec.metric or {}
    co = rec.coordinates or {}
    values = {
        "parameter": rec.parameter,
        "parameter_float": rec.parameter_float,
        "stability_class": st.get("class"),
        "polystable": st.get("polystable"),
        "delta_identically_zero": st.get("delta_identically_zero"),
        "witness_count": st.get("witness_count"),
        "normal_form": st.get("normal_form"),
        "diameter": me.get("diameter"),
        "total_volume": me.get("total_volume"),
        "unit_diameter_volume": me.get("unit_diameter_volume"),
        "landmark_count": me.get("landmark_count"),
        "coord_a": co.get("a"),
        "coord_b": co.get("b"),
        "coord_c": co.get("c"),
        "gh_to_previous": rec.gh_to_previous,
    }
    for col in _BASE_COLUMNS:
        v = values[col]
        if v is None:
            row[col] = ""
        elif isinstance(v, float):
            row[col] = format(v, float_format)
        else:
            row[col] = str(v)
    for name in sorted(rec.checks):
        chk = rec.checks[name]
        row[f"check_{name}_status"] = chk["status"]
        v = chk["value"]
        row[f"check_{name}_value"] = "" if v is None else format(v, float_format)
    row["error"] = rec.error or ""
    return row


def _json_payload(spec_name: str, kind: str, records, fmt: str) -> dict:
    out_records = []
    for rec in records:
        checks = {
            name: {
                "status": chk["status"],
                "value": _pin(chk["value"], fmt),
                "detail": chk["detail"],
            }
            for name, chk in sorted(rec.checks.items())
        }
        entry = {
            "parameter": rec.parameter,
            "parameter_float": _pin(rec.parameter_float, fmt),
            "stability": rec.stability,
            "metric": None if rec.metric is None else {
                k: _pin(v, fmt) for k, v in rec.metric.items()
            },
            "coordinates": None if rec.coordinates is None else {
                k: _pin(v, fmt) for k, v in rec.coordinates.items()
            },
            "gh_to_previous": _pin(rec.gh_to_previous, fmt),
            "checks": checks,
            "error": rec.error,
        }
        out_records.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "family": spec_name,
        "kind": kind,
        "records": out_records,
    }


def emit(records, format: str, out_dir, family_name: str, kind: str = "weierstrass",
         float_format: str = ".17g") -> list[Path]:
    """Write records to out_dir in one format; returns the written paths.

    Timing is deliberately left out of every artifact so repeated runs of
    the same configuration produce byte-identical files.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to emit")
    if format not in ("json", "csv", "gnuplot-columns"):
        raise ValueError(f"unknown emission format {format!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if format == "json":
        path = out / f"{family_name}.json"
        payload = _json_payload(family_name, kind, records, float_format)
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return [path]

    rows = [record_row(r, float_format) for r in records]
    check_cols = sorted({c for row in rows for c in row if c.startswith("check_")})
    columns = list(_BASE_COLUMNS) + check_cols + ["error"]
    if format == "csv":
        path = out / f"{family_name}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, restval="")
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
        return [path]

    path = out / f"{family_name}.dat"
    cols = ["parameter_float"] + [
        c for c in _NUMERIC_COLUMNS[1:] if any(row.get(c) for row in rows)
    ] + [c for c in check_cols if c.endswith("_value")
         and any(row.get(c) for row in rows)]
    order = sorted(range(len(rows)), key=lambda k: float(rows[k]["parameter_float"]))
    lines = [f"# family {family_name} schema {SCHEMA_VERSION}",
             "# " + " ".join(cols)]
    for k in order:
        lines.append(" ".join(rows[k].get(c) or "nan" for c in cols))
    path.write_text("\n".join(lines) + "\n")
    return [path]

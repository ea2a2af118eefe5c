"""Command-line interface: lattice, modular, classify, metric, satake,
family, and verify subcommands.

Exit codes: 0 success, 1 a reported check failed, 2 usage or input error.
All file outputs land under the --out directory (default from config).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .acceptance import verify_acceptance
from .config import ExperimentConfig, load_config, pin_float
from .families import builtin_cases, emit, run_family
from .kemetric import ConformalFactorField, build_mesh, summarize
from .lattice import classify_rank16, direct_sum, minus_d16plus_gram, minus_e8_gram
from .lattice import E8_TYPE, GAMMA16_TYPE, standard_gram
from .satake import (
    ClassifyThresholds,
    PeriodFrame,
    classify_sequence,
    diagonal_flow,
    phi_realize,
    q_orthonormalize,
    reference_frame,
    triangularize,
)
from .weierstrass import StabilityClass, classify_stability, parse_weierstrass
from . import modular

__all__ = ["main"]

_GRAMS = {
    "e8e8": lambda: direct_sum(minus_e8_gram(), minus_e8_gram()),
    "d16": minus_d16plus_gram,
}
_KINDS = {"e8": E8_TYPE, "gamma16": GAMMA16_TYPE}


class _InputError(Exception):
    """Bad user input outside argparse's reach; maps to exit code 2."""


def _pin_tree(value, fmt: str):
    if isinstance(value, float):
        return pin_float(value, fmt)
    if isinstance(value, complex):
        return {"re": pin_float(value.real, fmt), "im": pin_float(value.imag, fmt)}
    if isinstance(value, np.ndarray):
        return _pin_tree(value.tolist(), fmt)
    if isinstance(value, dict):
        return {k: _pin_tree(v, fmt) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_pin_tree(v, fmt) for v in value]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return _pin_tree(value.item(), fmt)
    return value


def _write_json(payload: dict, out_dir: str, name: str, fmt: str) -> Path:
    path = Path(out_dir) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_pin_tree(payload, fmt), sort_keys=True, indent=2)
    path.write_text(text + "\n")
    return path


def _parse_complex(text: str) -> complex:
    cleaned = text.strip().replace(" ", "")
    for candidate in (cleaned, cleaned.replace("i", "j")):
        try:
            return complex(candidate)
        except ValueError:
            continue
    raise _InputError(f"cannot parse {text!r} as a complex number")


def _read_pair(args) -> str:
    if args.text is not None:
        return args.text
    path = Path(args.pair)
    if not path.exists():
        raise _InputError(f"no such file: {path}")
    return path.read_text()


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.out is not None:
        cfg = ExperimentConfig(**{**cfg.to_dict(), "out_dir": args.out})
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def _cmd_lattice(args) -> int:
    cfg = _load_cfg(args)
    kinds = list(_GRAMS) if args.kind == "both" else [args.kind]
    out = {}
    for kind in kinds:
        verdict = classify_rank16(_GRAMS[kind]())
        out[kind] = {
            "kind": verdict.kind,
            "root_count": verdict.root_count,
            "component_sizes": list(verdict.component_sizes),
        }
        print(f"{kind}: {verdict.kind}, {verdict.root_count} roots, "
              f"components {verdict.component_sizes}")
    path = _write_json(out, cfg.out_dir, "lattice.json", cfg.float_format)
    print(f"wrote {path}")
    return 0


def _cmd_modular(args) -> int:
    cfg = _load_cfg(args)
    q = args.quantity
    if q == "lambda":
        try:
            jval = float(args.value)
        except ValueError as exc:
            raise _InputError(f"lambda expects a real j value: {exc}") from exc
        result = {"j": jval, "lambda": modular.lambda_of_j(jval)}
        print(f"lambda({jval:g}) = {result['lambda']!r}")
    elif q == "j":
        tau = _parse_complex(args.value)
        if tau.imag <= 0:
            raise _InputError("tau must lie in the upper half plane")
        result = {"tau": tau, "j": modular.j_from_tau(tau)}
        print(f"j({tau}) = {result['j']!r}")
    elif q == "eisenstein":
        tau = _parse_complex(args.value)
        if tau.imag <= 0:
            raise _InputError("tau must lie in the upper half plane")
        a, b = modular.eisenstein(tau)
        result = {"tau": tau, "g4": a, "g6": b}
        print(f"eisenstein({tau}) = ({a!r}, {b!r})")
    else:
        jval = _parse_complex(args.value)
        tau = complex(modular.invert_j_many(np.array([jval]))[0])
        result = {"j": jval, "tau": tau}
        print(f"invert_j({jval}) = {tau!r}")
    path = _write_json({"quantity": q, **result}, cfg.out_dir, "modular.json",
                       cfg.float_format)
    print(f"wrote {path}")
    return 0


def _stability_payload(report) -> dict:
    payload = {
        "class": report.cls.value,
        "polystable": report.polystable,
        "delta_identically_zero": report.delta_identically_zero,
        "witness_count": len(report.witnesses),
    }
    nf = report.polystable_normal_form
    if nf is not None:
        payload["normal_form"] = f"[{nf[0]} : {nf[1]}]"
    return payload


def _cmd_classify(args) -> int:
    cfg = _load_cfg(args)
    try:
        data = parse_weierstrass(_read_pair(args))
    except Exception as exc:
        raise _InputError(str(exc)) from exc
    report = classify_stability(data, cfg.cluster_tol)
    payload = _stability_payload(report)
    print(f"class: {payload['class']}  polystable: {payload['polystable']}  "
          f"delta identically zero: {payload['delta_identically_zero']}")
    if "normal_form" in payload:
        print(f"normal form: {payload['normal_form']}")
    path = _write_json(payload, cfg.out_dir, "classify.json", cfg.float_format)
    print(f"wrote {path}")
    return 0


def _cmd_metric(args) -> int:
    cfg = _load_cfg(args)
    try:
        data = parse_weierstrass(_read_pair(args))
    except Exception as exc:
        raise _InputError(str(exc)) from exc
    report = classify_stability(data, cfg.cluster_tol)
    if report.cls is not StabilityClass.STABLE:
        raise _InputError(
            f"metric summaries need a stable datum; this one is {report.cls.value}"
        )
    field = ConformalFactorField(data, tol=cfg.cluster_tol)
    resolution = args.resolution or cfg.mesh_resolution
    mesh = build_mesh(field, resolution=resolution,
                      neighbor_factor=cfg.neighbor_factor)
    summary = summarize(mesh, args.landmarks or cfg.landmarks)
    scale = summary.unit_diameter_scale
    payload = {
        "stability": _stability_payload(report),
        "resolution": resolution,
        "nodes": mesh.n_nodes,
        "diameter": summary.diameter,
        "total_volume": summary.total_volume,
        "unit_diameter_volume": summary.total_volume * scale * scale,
        "landmark_count": len(summary.landmark_ids),
    }
    print(f"diameter {summary.diameter:.6g}, volume {summary.total_volume:.6g}, "
          f"unit-diameter volume {payload['unit_diameter_volume']:.6g}")
    path = _write_json(payload, cfg.out_dir, "metric.json", cfg.float_format)
    print(f"wrote {path}")
    return 0


def _frames_from_file(path: str) -> tuple[list, str]:
    p = Path(path)
    if not p.exists():
        raise _InputError(f"no such file: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise _InputError(f"frames file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise _InputError("frames file must be a JSON object")
    kind = _KINDS.get(raw.get("lattice", "e8"))
    if kind is None:
        raise _InputError("lattice must be one of: " + ", ".join(_KINDS))
    basis = standard_gram(kind)
    if "flow" in raw:
        rates = raw["flow"]
        steps = int(raw.get("steps", 8))
        if (not isinstance(rates, list) or len(rates) != 3
                or not all(isinstance(r, (int, float)) for r in rates)):
            raise _InputError("flow must be a list of three rates [a, b, c]")
        if steps < 4:
            raise _InputError("a flow needs at least 4 steps to classify")
        ref = reference_frame(basis)
        frames = [
            PeriodFrame(
                diagonal_flow(rates[0] * k, rates[1] * k, rates[2] * k) @ ref.matrix,
                basis,
            )
            for k in range(steps)
        ]
    elif "matrices" in raw:
        frames = []
        for m in raw["matrices"]:
            arr = np.asarray(m, dtype=float)
            if arr.shape != (22, 3):
                raise _InputError("each frame matrix must be 22 x 3")
            frames.append(PeriodFrame(arr, basis))
        if len(frames) < 4:
            raise _InputError("a sequence needs at least 4 frames to classify")
    else:
        raise _InputError("frames file needs a 'flow' or 'matrices' entry")
    return frames, kind


def _cmd_satake(args) -> int:
    cfg = _load_cfg(args)
    frames, kind = _frames_from_file(args.frames)
    coords = [triangularize(q_orthonormalize(f)) for f in frames]
    thresholds = ClassifyThresholds(
        divergence=cfg.divergence_threshold,
        variation=cfg.variation_bound,
        siegel_bound=cfg.siegel_bound,
    )
    verdict = classify_sequence(coords, thresholds, lattice_kind=kind)
    payload = {
        "btype": verdict.btype,
        "lattice_kind": verdict.lattice_kind,
        "diagnostics": dict(verdict.diagnostics),
        "coordinates": [{"a": c.a, "b": c.b, "c": c.c} for c in coords],
    }
    if verdict.payload is not None:
        payload["payload"] = verdict.payload
    print(f"boundary type: {verdict.btype} ({verdict.lattice_kind})")
    if verdict.btype in ("TypeB", "TypeC", "TypeD"):
        real = phi_realize(verdict, orbifold_grid=cfg.orbifold_grid)
        payload["realization"] = f"{real.kind} at scale {real.scale:.6f}"
        print(f"realization: {payload['realization']}")
    path = _write_json(payload, cfg.out_dir, "satake.json", cfg.float_format)
    print(f"wrote {path}")
    return 0


def _cmd_family(args) -> int:
    cfg = _load_cfg(args)
    cases = {c.name: c for c in builtin_cases()}
    if args.list:
        for spec in cases.values():
            print(f"{spec.name}: {spec.kind}, {len(spec.parameters)} steps, "
                  f"checks {', '.join(spec.checks)}")
        return 0
    if args.case:
        missing = [n for n in args.case if n not in cases]
        if missing:
            raise _InputError(
                "unknown case(s): " + ", ".join(missing)
                + "; known: " + ", ".join(cases)
            )
        chosen = [cases[n] for n in args.case]
    elif args.all:
        chosen = list(cases.values())
    else:
        raise _InputError("pick --case NAME (repeatable), --all, or --list")
    if args.strict:
        cfg = ExperimentConfig(**{**cfg.to_dict(), "strict": True})
    failed = False
    for spec in chosen:
        records = run_family(spec, cfg)
        for path in emit(records, args.format, cfg.out_dir, spec.name,
                         spec.kind, cfg.float_format):
            print(f"wrote {path}")
        for rec in records:
            checks = "  ".join(
                f"{name}={entry['status']}" for name, entry in sorted(rec.checks.items())
            )
            line = f"{spec.name} parameter={rec.parameter}"
            if rec.error:
                line += f"  error: {rec.error}"
                failed = True
            if checks:
                line += "  " + checks
            print(line)
            failed = failed or any(
                entry["status"] == "fail" for entry in rec.checks.values()
            )
    return 1 if failed else 0


def _cmd_verify(args) -> int:
    cfg = _load_cfg(args)
    report = verify_acceptance(cfg, numbers=args.only)
    for line in report.lines():
        print(line)
    path = _write_json(report.to_dict(cfg.float_format), cfg.out_dir,
                       "acceptance.json", cfg.float_format)
    print(f"wrote {path}")
    return 0 if report.all_passed else 1


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="k3lab",
        description=(
            "Weierstrass elliptic K3 laboratory: stability classification, "
            "singular metrics, boundary types, and degeneration families."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="config file (JSON or key = value lines)")
        p.add_argument("--out", help="output directory (default from config)")

    p = sub.add_parser("lattice", help="rank-16 root system dichotomy")
    p.add_argument("--kind", choices=[*_GRAMS, "both"], default="both")
    common(p)
    p.set_defaults(fn=_cmd_lattice)

    p = sub.add_parser("modular", help="modular quantities: lambda, j, eisenstein")
    p.add_argument("quantity", choices=["lambda", "j", "eisenstein", "invert-j"])
    p.add_argument("value", help="real j for lambda; complex tau or j otherwise")
    common(p)
    p.set_defaults(fn=_cmd_modular)

    for name, fn, extra in (
        ("classify", _cmd_classify, False),
        ("metric", _cmd_metric, True),
    ):
        p = sub.add_parser(name, help=f"{name} a Weierstrass pair")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--pair", help="file with 'h8 = ...; h12 = ...'")
        src.add_argument("--text", help="inline pair text")
        if extra:
            p.add_argument("--resolution", type=int, help="mesh resolution override")
            p.add_argument("--landmarks", type=int, help="landmark count override")
        common(p)
        p.set_defaults(fn=fn)

    p = sub.add_parser("satake", help="boundary type of a period-frame sequence")
    p.add_argument("--frames", required=True,
                   help="JSON file with a 'flow' or 'matrices' entry")
    common(p)
    p.set_defaults(fn=_cmd_satake)

    p = sub.add_parser("family", help="run degeneration families")
    p.add_argument("--case", action="append", help="builtin case name (repeatable)")
    p.add_argument("--all", action="store_true", help="run every builtin case")
    p.add_argument("--list", action="store_true", help="list builtin cases")
    p.add_argument("--format", choices=["json", "csv", "gnuplot-columns"],
                   default="json")
    p.add_argument("--strict", action="store_true",
                   help="stop on the first step error")
    common(p)
    p.set_defaults(fn=_cmd_family)

    p = sub.add_parser("verify", help="run the acceptance criteria")
    p.add_argument("--only", type=int, action="append",
                   help="criterion number (repeatable)")
    common(p)
    p.set_defaults(fn=_cmd_verify)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

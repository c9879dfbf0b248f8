"""``tangent-forge eval|verify|report`` over JSON scenario files.

Scenario fields::

    name                  optional label
    dimension             m
    chart_box             {"x": [[lo, hi], ...], "y": [[lo, hi], ...], "zero_section_margin": r}
    sigma, psi            m x m matrices of expression strings (or numbers)
    connection            {"explicit": M} | {"from_metric": M} | {"from_lagrangian": "expr"}
    base_metric_for_gamma optional x-only metric used as the reference for
                          Christoffel and lifted-Ricci checks
    structure             optional {"complex": A} | {"symplectic": omega} | {"blocks": {"A", "w", "b"}}
    seed, sample_count    sampling policy
    requests              optional [{"tensor": id, "point": [...]}] for ``eval``
    suites                optional list of registered check names for ``verify``

Exit status: 0 all suites pass, 1 a suite failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from .bundle import (
    ChartSpec,
    ConstructionError,
    LagrangianSpec,
    NonlinearConnection,
    VelocityTensor,
    connection_from_base_metric,
    connection_from_lagrangian,
)
from .connections import canonical_connections, double_metric_cartan, levi_civita_of_G
from .curvtor import curvature_dmc_closed_form, einstein_cartan_residual, ricci_dmc, torsion_tensor
from .expr import DomainError, ParseError, parse
from .gencomplex import (
    VdgAlmostComplex,
    complex_structure,
    integrability_tensors,
    sasaki_kahler_check,
    symplectic_structure,
)
from .jets import JetOrderError
from .oracle import REGISTRY, OracleConfig, Setting, run_registry

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

FIELDS = {"name", "dimension", "chart_box", "sigma", "psi", "connection", "base_metric_for_gamma",
          "structure", "seed", "sample_count", "requests", "suites"}
REQUIRED = ("dimension", "chart_box", "sigma", "psi", "connection")


class InputError(ValueError):
    """Malformed or inconsistent scenario input."""


# --------------------------------------------------------------------------
# scenario parsing


def _locate(text: str, needle: str, offset: int = 0) -> tuple[int, int] | None:
    """Line and column in ``text`` of character ``offset`` inside the JSON string ``needle``."""
    at = text.find(json.dumps(needle)) if text else -1
    if at < 0:
        return None
    pos = at + 1 + offset
    return text.count("\n", 0, pos) + 1, pos - (text.rfind("\n", 0, pos) + 1) + 1


def _only(obj, allowed, where):
    if not isinstance(obj, dict):
        raise InputError(f"{where} must be an object")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise InputError(f"unknown field(s) in {where}: {', '.join(extra)}")


def _matrix(rows, m, where, text):
    if (not isinstance(rows, list) or len(rows) != m
            or any(not isinstance(r, list) or len(r) != m for r in rows)):
        raise InputError(f"{where} must be a {m} x {m} matrix")
    out = []
    for i, row in enumerate(rows):
        parsed = []
        for j, item in enumerate(row):
            if isinstance(item, bool) or not isinstance(item, (str, int, float)):
                raise InputError(f"{where}[{i}][{j}] must be an expression string or a number")
            try:
                parsed.append(parse(item, m) if isinstance(item, str) else item)
            except ParseError as exc:
                loc = _locate(text, item, exc.column - 1)
                where_ = f" (file line {loc[0]}, column {loc[1]})" if loc else ""
                raise InputError(f"{where}[{i}][{j}]: {exc}{where_}") from exc
        out.append(parsed)
    return out


def _tensor(rows, m, where, text, symmetry):
    _matrix(rows, m, where, text)  # located parse errors
    return VelocityTensor.parse(rows, m, symmetry)


@dataclass
class Scenario:
    name: str
    setting: Setting
    seed: int
    samples: int
    requests: list
    suites: list | None
    spec: dict = field(repr=False)

    @property
    def points(self) -> np.ndarray:
        return self.setting.chart.sample_points(self.samples, self.seed)

    @property
    def spec_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.spec, sort_keys=True).encode()).hexdigest()


def _chart(box, m) -> ChartSpec:
    _only(box, {"x", "y", "zero_section_margin"}, "chart_box")
    try:
        xs = tuple(tuple(float(v) for v in iv) for iv in box["x"])
        ys = tuple(tuple(float(v) for v in iv) for iv in box["y"])
        if any(len(iv) != 2 for iv in xs + ys):
            raise ValueError
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError("chart_box needs x and y lists of [lo, hi] intervals") from exc
    try:
        return ChartSpec(m, xs, ys, float(box.get("zero_section_margin", 0.0)))
    except ConstructionError as exc:
        raise InputError(str(exc)) from exc


def _connection(spec, m, text, points) -> NonlinearConnection:
    _only(spec, {"explicit", "from_metric", "from_lagrangian"}, "connection")
    if len(spec) != 1:
        raise InputError("connection needs exactly one of explicit, from_metric, from_lagrangian")
    (kind, value), = spec.items()
    if kind == "explicit":
        _matrix(value, m, "connection.explicit", text)
        return NonlinearConnection.parse(value, m)
    if kind == "from_metric":
        s = _tensor(value, m, "connection.from_metric", text, "symmetric")
        return connection_from_base_metric(s, points)
    if not isinstance(value, str):
        raise InputError("connection.from_lagrangian must be an expression string")
    try:
        L = parse(value, m)
    except ParseError as exc:
        loc = _locate(text, value, exc.column - 1)
        raise InputError(f"connection.from_lagrangian: {exc}"
                         + (f" (file line {loc[0]}, column {loc[1]})" if loc else "")) from exc
    return connection_from_lagrangian(LagrangianSpec(L, m), points)


def _structure(spec, m, text) -> VdgAlmostComplex:
    _only(spec, {"complex", "symplectic", "blocks"}, "structure")
    if len(spec) != 1:
        raise InputError("structure needs exactly one of complex, symplectic, blocks")
    (kind, value), = spec.items()
    if kind == "complex":
        return complex_structure(_tensor(value, m, "structure.complex", text, None))
    if kind == "symplectic":
        return symplectic_structure(_tensor(value, m, "structure.symplectic", text, "antisymmetric"))
    _only(value, {"A", "w", "b"}, "structure.blocks")
    if set(value) != {"A", "w", "b"}:
        raise InputError("structure.blocks needs A, w and b")
    return VdgAlmostComplex(_tensor(value["A"], m, "structure.blocks.A", text, None),
                            _tensor(value["w"], m, "structure.blocks.w", text, "antisymmetric"),
                            _tensor(value["b"], m, "structure.blocks.b", text, "antisymmetric"))


def build_scenario(spec: dict, text: str = "", seed: int | None = None, samples: int | None = None) -> Scenario:
    _only(spec, FIELDS, "scenario")
    missing = [k for k in REQUIRED if k not in spec]
    if missing:
        raise InputError(f"missing field(s): {', '.join(missing)}")
    m = spec["dimension"]
    if isinstance(m, bool) or not isinstance(m, int) or m < 1:
        raise InputError("dimension must be a positive integer")
    chart = _chart(spec["chart_box"], m)
    seed = int(spec.get("seed", 0) if seed is None else seed)
    samples = int(spec.get("sample_count", 50) if samples is None else samples)
    if samples < 1:
        raise InputError("sample_count must be >= 1")
    spec = dict(spec, seed=seed, sample_count=samples)
    pts = chart.sample_points(samples, seed)
    try:
        sigma = _tensor(spec["sigma"], m, "sigma", text, "symmetric")
        psi = _tensor(spec["psi"], m, "psi", text, "antisymmetric")
        sigma.check(pts)
        sigma.require_nondegenerate(pts)
        psi.check(pts)
        conn = _connection(spec["connection"], m, text, pts)
        base = None
        if "base_metric_for_gamma" in spec:
            base = _tensor(spec["base_metric_for_gamma"], m, "base_metric_for_gamma", text, "symmetric")
            if base.projectability_defect(pts) > 0:
                raise InputError("base_metric_for_gamma must depend on x only")
            base.check(pts)
            base.require_nondegenerate(pts)
        structure = None
        if "structure" in spec:
            structure = _structure(spec["structure"], m, text)
            structure.check(pts)
    except ConstructionError as exc:
        raise InputError(str(exc)) from exc
    suites = spec.get("suites")
    if suites is not None:
        unknown = [s for s in suites if s not in REGISTRY]
        if unknown:
            raise InputError(f"unknown suite(s): {', '.join(map(str, unknown))}")
    requests = _requests(spec.get("requests", []), chart)
    setting = Setting(chart, sigma, psi, conn, structure, base, spec.get("name", ""))
    return Scenario(spec.get("name", ""), setting, seed, samples, requests, suites, spec)


def _requests(reqs, chart):
    if not isinstance(reqs, list):
        raise InputError("requests must be a list")
    out = []
    for k, r in enumerate(reqs):
        _only(r, {"tensor", "point"}, f"requests[{k}]")
        if r.get("tensor") not in TENSORS:
            raise InputError(f"requests[{k}]: unknown tensor id {r.get('tensor')!r}; "
                             f"known ids: {', '.join(sorted(TENSORS))}")
        pt = r.get("point")
        if pt is not None:
            pt = np.asarray(pt, dtype=float)
            if pt.shape != (chart.n,) or not chart.contains(pt):
                raise InputError(f"requests[{k}]: point {np.asarray(r['point']).tolist()} is not inside the chart")
        out.append((r["tensor"], pt))
    return out


def load_scenario(path, seed: int | None = None, samples: int | None = None) -> Scenario:
    text = Path(path).read_text()
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: {exc.msg} at line {exc.lineno}, column {exc.colno}") from exc
    if not isinstance(spec, dict):
        raise InputError(f"{path}: top level must be an object")
    return build_scenario(spec, text, seed, samples)


def bundled_scenarios() -> dict:
    root = resources.files("tangent_forge") / "scenarios"
    return {p.name[:-5]: p for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".json")}


# --------------------------------------------------------------------------
# evaluation


def _sk(setting, p):
    if setting.structure is None:
        raise InputError("sasaki_kahler needs a structure")
    v = sasaki_kahler_check(setting.sigma, setting.psi, setting.connection, setting.structure, [p])
    return {"verdict": v.verdict, "failing": v.failing}


def _integrability(setting, p):
    if setting.structure is None:
        raise InputError("integrability needs a structure")
    return integrability_tensors(setting.structure.jet(p, 1), setting.metric(p).local).residuals


def _einstein_cartan(setting, p):
    gs = setting.metric(p)
    res, lam = einstein_cartan_residual(ricci_dmc(gs), gs)
    zero, _ = einstein_cartan_residual(ricci_dmc(gs), gs, 0.0)
    return {"best_lambda": lam, "residual_at_best": res, "residual_at_zero": zero}


TENSORS = {
    "G": lambda s, p: s.metric(p).G.value,
    "gamma": lambda s, p: s.metric(p).gamma.value,
    "H": lambda s, p: s.metric(p).H.value,
    "Phi": lambda s, p: s.metric(p).Phi.value,
    "neutral_metric": lambda s, p: s.metric(p).gH.value,
    "Q": lambda s, p: s.metric(p).Q.value,
    "beta": lambda s, p: s.metric(p).gen.beta.value,
    "nonlinear_connection": lambda s, p: s.connection.value(p),
    "ehresmann_curvature": lambda s, p: s.metric(p).local.ehresmann(),
    "cartan_tensor": lambda s, p: canonical_connections(s.metric(p))["cartan_data"].C.value,
    "double_metric_cartan": lambda s, p: double_metric_cartan(s.metric(p)).coefficients,
    "torsion_dmc": lambda s, p: torsion_tensor(double_metric_cartan(s.metric(p))).value,
    "curvature_dmc": lambda s, p: curvature_dmc_closed_form(s.metric(p)),
    "ricci_dmc": lambda s, p: ricci_dmc(s.metric(p)).matrix,
    "einstein_cartan": _einstein_cartan,
    "levi_civita_G": lambda s, p: levi_civita_of_G(s.metric(p)).coefficients,
    "integrability": _integrability,
    "sasaki_kahler": _sk,
}


def _components(value):
    if isinstance(value, dict):
        return {k: _components(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def eval_records(sc: Scenario, config: OracleConfig) -> list:
    out = []
    for tensor, pt in sc.requests:
        pts = [pt] if pt is not None else list(sc.points)
        for p in pts:
            out.append({"kind": "tensor", "tensor": tensor, "point": np.asarray(p).tolist(), "frame": "adapted",
                        "components": _components(TENSORS[tensor](sc.setting, p)),
                        "seed": sc.seed, "tolerance": None})
    return out


def verify_records(sc: Scenario, config: OracleConfig) -> list:
    recs = run_registry(sc.setting, sc.points, config, sc.suites)
    return [dict(kind="suite", seed=sc.seed, **r) for r in recs]


# --------------------------------------------------------------------------
# reports


def _line(record) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=True)


def payload_hash(lines) -> str:
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()


def summarize(records, lines, extra=None) -> dict:
    suites = [r for r in records if r.get("kind") == "suite"]
    counts = {v: sum(r["verdict"] == v for r in suites) for v in ("pass", "fail", "skip")}
    worst = {}
    for r in suites:
        if r["verdict"] != "skip":
            worst[r["identity"]] = max(worst.get(r["identity"], 0.0), r["residual"])
    summary = {"kind": "summary", "records": len(records), "suites": counts,
               "failing": sorted({r["identity"] for r in suites if r["verdict"] == "fail"}),
               "worst_residuals": worst, "payload_hash": payload_hash(lines),
               "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    summary.update(extra or {})
    return summary


def run(command: str, path, seed=None, samples=None, out=None, profile="default", stream=None) -> int:
    """Runs one command; returns the exit status."""
    stream = stream or sys.stdout
    config = OracleConfig.profile(profile)
    try:
        if command == "report" and not _is_scenario(path):
            records = _read_report(path)
            extra = {"source": str(path)}
        else:
            sc = load_scenario(path, seed, samples)
            config = OracleConfig.profile(profile, samples=sc.samples, seed=sc.seed)
            head = {"kind": "header", "command": command, "scenario": sc.name, "scenario_hash": sc.spec_hash,
                    "seed": sc.seed, "samples": sc.samples, "profile": profile}
            records = [head]
            if command in ("eval", "report"):
                records += eval_records(sc, config)
            if command in ("verify", "report"):
                records += verify_records(sc, config)
            extra = {"scenario": sc.name, "seed": sc.seed}
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConstructionError, DomainError, JetOrderError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    lines = [_line(r) for r in records]
    summary = summarize(records, lines, extra)
    if out:
        Path(out).write_text("\n".join(lines) + "\n")
        Path(str(out) + ".summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    else:
        for ln in lines:
            print(ln, file=stream)
    print(json.dumps(summary, sort_keys=True), file=stream)
    return EXIT_FAIL if summary["suites"]["fail"] else EXIT_OK


def _is_scenario(path) -> bool:
    try:
        spec = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, OSError):
        return False
    return isinstance(spec, dict) and "dimension" in spec


def _read_report(path) -> list:
    records = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(str(exc)) from exc
    for k, ln in enumerate(text.splitlines(), 1):
        if not ln.strip():
            continue
        try:
            records.append(json.loads(ln))
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: {exc.msg} at line {k}, column {exc.colno}") from exc
    return [r for r in records if r.get("kind") != "summary"]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tangent-forge",
                                     description="Evaluate and verify generalized Sasaki geometry scenarios.")
    parser.add_argument("command", choices=("eval", "verify", "report"))
    parser.add_argument("spec", help="scenario JSON, a bundled scenario name, or a prior report for `report`")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--samples", type=int)
    parser.add_argument("--out", help="write records here and the summary next to it")
    parser.add_argument("--tolerance-profile", choices=("default", "strict"), default="default")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    path = args.spec
    if not Path(path).exists() and path in bundled_scenarios():
        path = bundled_scenarios()[path]
    return run(args.command, path, args.seed, args.samples, args.out, args.tolerance_profile)


if __name__ == "__main__":
    sys.exit(main())

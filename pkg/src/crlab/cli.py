"""Scenario runner: ``crlab <scenario> --config run.json [--out report.json] [--csv table.csv]``.

Exit codes: 0 success, 2 solver did not converge, 3 invalid configuration,
4 an assertion or certification failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np
from threadpoolctl import threadpool_limits

from . import conformal, solvers, spectral
from .convergence import DEFAULT_FIELDS, convergence_suite
from .errors import (
    CertificationFailure,
    FormulaError,
    NoConvergence,
    PreconditionViolated,
    VerificationFailed,
)
from .formula import compile_formula
from .linalg import SolveOptions
from .operators import Structure, apply_T

SCENARIOS = ("spectral", "yamabe", "solve", "manufacture", "trichotomy",
             "necessary", "certify-ce", "convergence")

EXIT_OK, EXIT_NOCONV, EXIT_CONFIG, EXIT_FAIL = 0, 2, 3, 4

_FORMULA = {
    "type": "object",
    "properties": {"formula": {"type": "string"}},
    "required": ["formula"],
    "additionalProperties": False,
}
_FIELD = {"oneOf": [_FORMULA, {"type": "number"}, {"type": "string"}]}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "lattice": {
            "type": "object",
            "properties": {"N": {"type": "integer", "minimum": 2}},
            "required": ["N"],
            "additionalProperties": False,
        },
        "rho": _FIELD,
        "scenario": {
            "type": "object",
            "properties": {
                "kind": {"enum": list(SCENARIOS)},
                "rho_hat": _FIELD,
                "w": _FIELD,
                "u": _FIELD,
                "u_init": _FIELD,
                "phi": {
                    "type": "object",
                    "properties": {
                        "kind": {"const": "right_translation"},
                        "g": {"type": "array", "items": {"type": "integer"},
                              "minItems": 3, "maxItems": 3},
                    },
                    "required": ["g"],
                    "additionalProperties": False,
                },
                "method": {"enum": ["monotone", "newton", "both"]},
                "descending": {"type": "boolean"},
                "tol": {"type": "number", "exclusiveMinimum": 0},
                "abs_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 1},
                "zero_tol": {"type": "number", "exclusiveMinimum": 0},
                "expect_lambda1": {"type": "number"},
                "roundtrip_tol": {"type": "number", "exclusiveMinimum": 0},
                "Ns": {"type": "array", "items": {"type": "integer", "minimum": 2}, "minItems": 1},
                "fields": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "order_window": {"type": "array", "items": {"type": "number"},
                                 "minItems": 2, "maxItems": 2},
            },
            "additionalProperties": False,
        },
        "seed": {"type": "integer"},
    },
    "required": ["lattice", "scenario"],
    "additionalProperties": False,
}


class ConfigError(Exception):
    pass


class Report:
    def __init__(self, config: dict, kind: str):
        self.config = config
        self.kind = kind
        self.results: dict = {}
        self.assertions: list[dict] = []
        self.table: list[tuple] | None = None
        self.columns: tuple | None = None
        self.error: str | None = None

    def check(self, name: str, measured, tolerance, passed: bool, comparison: str = "<=") -> bool:
        self.assertions.append({
            "name": name,
            "measured": _jsonable(measured),
            "tolerance": _jsonable(tolerance),
            "comparison": comparison,
            "pass": bool(passed),
        })
        return passed

    @property
    def passed(self) -> bool:
        return self.error is None and all(a["pass"] for a in self.assertions)

    def as_dict(self) -> dict:
        return {
            "config": self.config,
            "scenario": self.kind,
            "results": {k: _jsonable(v) for k, v in self.results.items()},
            "assertions": self.assertions,
            "error": self.error,
            "status": "pass" if self.passed else "fail",
        }


def _jsonable(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    return v


def load_config(path: str | Path) -> dict:
    try:
        config = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from None
    for key in ("rho",):
        if key in config:
            _formula_text(config[key])
    for key in ("rho_hat", "w", "u", "u_init"):
        if key in config["scenario"]:
            _formula_text(config["scenario"][key])
    return config


def _formula_text(spec) -> str:
    if isinstance(spec, dict):
        text = spec["formula"]
    elif isinstance(spec, str):
        text = spec
    else:
        text = repr(float(spec))
    try:
        compile_formula(text)
    except FormulaError as exc:
        raise ConfigError(str(exc)) from None
    return text


def _field(structure: Structure, spec) -> np.ndarray:
    return structure.lattice.sample(_formula_text(spec))


def _need(sc: dict, key: str):
    if key not in sc:
        raise ConfigError(f"scenario {sc.get('kind')!r} requires {key!r}")
    return sc[key]


def _solve_opts(sc: dict) -> SolveOptions:
    return SolveOptions(rel_tol=sc.get("tol", 1e-10), max_iter=sc.get("max_iter"))


def run_spectral(s: Structure, sc: dict, rep: Report) -> None:
    res = spectral.lambda1(s, _solve_opts(sc))
    rq = s.lattice.inner(res.psi, res.psi)
    rep.results.update(lambda1=res.lambda1, residual=res.residual, psi_min=float(np.min(res.psi)),
                       psi_max=float(np.max(res.psi)), iterations=res.iterations)
    rep.check("psi_positive", float(np.min(res.psi)), 0.0, np.min(res.psi) > 0.0, ">")
    rep.check("psi_normalized", abs(rq - 1.0), 1e-10, abs(rq - 1.0) <= 1e-10)
    tol = sc.get("tol", 1e-10) * max(1.0, abs(res.lambda1), abs(float(np.min(s.rho)) - 1.0))
    rep.check("eigen_residual", res.residual, tol, res.residual <= tol)
    if "expect_lambda1" in sc:
        err = abs(res.lambda1 - sc["expect_lambda1"])
        rep.check("lambda1_expected", err, 1e-8, err <= 1e-8)


def run_yamabe(s: Structure, sc: dict, rep: Report) -> None:
    yres = spectral.minimize_yamabe(s)
    lam = spectral.lambda1(s, _solve_opts(sc)).lambda1
    tol = sc.get("zero_tol", s.zero_tol())
    rep.results.update(Y=yres.Y, iterations=yres.iterations, lambda1=lam)
    same = spectral.Sign.of(yres.Y, tol) is spectral.Sign.of(lam, tol)
    rep.check("sign_Y_equals_sign_lambda1", [yres.Y, lam], tol, same, "same-sign")
    rep.table = [(k, q) for k, q in enumerate(yres.history)]
    rep.columns = ("iter", "quotient")


def _monotone_table(report: solvers.MonotoneReport, rep: Report) -> None:
    rep.table = report.rows()
    rep.columns = solvers.CSV_COLUMNS


def run_solve(s: Structure, sc: dict, rep: Report) -> None:
    rho_hat = _field(s, _need(sc, "rho_hat"))
    opts = solvers.MonotoneOptions(abs_tol=sc.get("abs_tol", 1e-9),
                                   max_iter=sc.get("max_iter", 5000),
                                   descending=sc.get("descending", False))
    spec = spectral.lambda1(s)
    rep.results["lambda1"] = spec.lambda1
    u, mrep = solvers.solve_prescribed(s, rho_hat, opts, spectral=spec)
    _monotone_table(mrep, rep)
    res = mrep.residuals[-1]
    mu1 = spectral.mu1_of_A(s, u)
    rep.results.update(iterations=mrep.iterations, lam=mrep.lam, residual=res,
                       min_u=float(np.min(u)), max_u=float(np.max(u)), mu1_A=mu1,
                       log_ratio_bound=mrep.log_ratio_bound)
    rep.check("residual", res, opts.abs_tol, res < opts.abs_tol, "<")
    rep.check("monotone", mrep.all_monotone, True, mrep.all_monotone, "==")
    rep.check("sandwich", mrep.all_sandwiched, True, mrep.all_sandwiched, "==")
    rep.check("mu1_A_positive", mu1, 0.0, mu1 > 0.0, ">")


def run_manufacture(s: Structure, sc: dict, rep: Report) -> None:
    w = _field(s, _need(sc, "w"))
    rho_hat = apply_T(s, w)
    method = sc.get("method", "newton")
    tol = sc.get("roundtrip_tol", 1e-7)
    rep.results.update(rho_hat_min=float(np.min(rho_hat)), rho_hat_max=float(np.max(rho_hat)))
    if method in ("monotone", "both"):
        u, mrep = solvers.solve_prescribed(s, rho_hat)
        _monotone_table(mrep, rep)
        err = float(np.max(np.abs(u - w)))
        rep.results["monotone_error"] = err
        rep.check("monotone_roundtrip", err, tol, err < tol, "<")
    if method in ("newton", "both"):
        u0 = _field(s, sc.get("u_init", "1"))
        un, nrep = solvers.newton_solve(s, rho_hat, u0)
        err = float(np.max(np.abs(un - w)))
        rep.results.update(newton_error=err, newton_residuals=nrep.residuals)
        rep.check("newton_roundtrip", err, tol, err < tol, "<")
        if rep.table is None:
            rep.table = nrep.rows()
            rep.columns = ("iter", "residual_linf", "step")


def run_trichotomy(s: Structure, sc: dict, rep: Report) -> None:
    tri = spectral.trichotomy(s, sc.get("zero_tol"), _solve_opts(sc))
    rep.results.update(sign=tri.sign.name, lambda1=tri.lambda1, Y=tri.Y, zero_tol=tri.zero_tol)
    rep.check("sign_agreement", [tri.lambda1, tri.Y], tri.zero_tol, tri.agree, "same-sign")
    if "w" in sc:
        d = conformal.deformed_structure(s, _field(s, sc["w"]))
        lam_d = d.lambda1(_solve_opts(sc)).lambda1
        same = spectral.Sign.of(lam_d, tri.zero_tol) is tri.sign
        rep.results["deformed_lambda1"] = lam_d
        rep.check("deformed_sign_invariant", lam_d, tri.zero_tol, same, "same-sign")
    if "phi" in sc:
        phi = conformal.RightTranslation.of(sc["phi"]["g"], s.N)
        moved = s.with_rho(conformal.pullback(s.rho, phi, s.lattice))
        lam_t = spectral.lambda1(moved, _solve_opts(sc)).lambda1
        same = spectral.Sign.of(lam_t, tri.zero_tol) is tri.sign
        rep.results["translated_lambda1"] = lam_t
        rep.check("translated_sign_invariant", lam_t, tri.zero_tol, same, "same-sign")


def run_necessary(s: Structure, sc: dict, rep: Report) -> None:
    w = _field(s, _need(sc, "w"))
    rho_hat = apply_T(s, w)
    nrep = conformal.necessary_conditions(s, rho_hat, w)
    rep.results.update(identity_integral=nrep.identity_integral, changes_sign=nrep.changes_sign,
                       integral_rho_hat=nrep.integral_rho_hat)
    rep.check("identity_integral_zero", abs(nrep.identity_integral), nrep.identity_tol,
              abs(nrep.identity_integral) <= nrep.identity_tol)
    if not nrep.identically_zero:
        rep.check("rho_hat_changes_sign", nrep.changes_sign, True, nrep.changes_sign, "==")
        rep.check("integral_rho_hat_negative", nrep.integral_rho_hat, 0.0,
                  nrep.integral_rho_hat < 0.0, "<")


def run_certify(s: Structure, sc: dict, rep: Report) -> None:
    phi = conformal.RightTranslation.of(sc.get("phi", {"g": [0, 0, 0]})["g"], s.N)
    tol = sc.get("tol", 1e-8)
    if "rho_hat" in sc:
        rho_hat = _field(s, sc["rho_hat"])
        u = _field(s, _need(sc, "u"))
    else:
        rho_hat, u = conformal.manufacture_CE(s, _field(s, _need(sc, "w")), phi)
    rep.results["classification"] = conformal.classify_CE(s, rho_hat).value
    try:
        cert = conformal.certify_CE(s, rho_hat, phi, u, tol)
    except CertificationFailure as exc:
        rep.check("ce_residual", exc.residual, tol, False)
        return
    rep.results["certificate"] = json.loads(cert.to_json())
    rep.check("ce_residual", cert.residual, tol, True)


def run_convergence(s: Structure | None, sc: dict, rep: Report) -> None:
    Ns = sc.get("Ns", [8, 16, 32])
    fields = sc.get("fields", list(DEFAULT_FIELDS))
    lo, hi = sc.get("order_window", [1.7, 2.3])
    rows = convergence_suite(Ns, fields)
    rep.table = [r.as_tuple() for r in rows]
    rep.columns = ("field", "N", "error_inf", "order")
    for r in rows:
        if r.order is not None:
            rep.check(f"order[{r.field}, N={r.N}]", r.order, [lo, hi], lo <= r.order <= hi, "in")
        elif max(e.error_inf for e in rows if e.field == r.field) <= 1e-12 * r.N**2:
            rep.check(f"exact[{r.field}, N={r.N}]", r.error_inf, 1e-12 * r.N**2,
                      r.error_inf <= 1e-12 * r.N**2)


RUNNERS = {
    "spectral": run_spectral,
    "yamabe": run_yamabe,
    "solve": run_solve,
    "manufacture": run_manufacture,
    "trichotomy": run_trichotomy,
    "necessary": run_necessary,
    "certify-ce": run_certify,
    "convergence": run_convergence,
}


def execute(kind: str, config: dict) -> tuple[Report, int]:
    sc = dict(config["scenario"])
    if sc.setdefault("kind", kind) != kind:
        raise ConfigError(f"config scenario kind {sc['kind']!r} does not match command {kind!r}")
    rep = Report(config, kind)
    N = config["lattice"]["N"]
    try:
        s = Structure.from_formula(N, _formula_text(config.get("rho", 0.0)))
        RUNNERS[kind](s, sc, rep)
    except NoConvergence as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
        return rep, EXIT_NOCONV
    except (PreconditionViolated, VerificationFailed, CertificationFailure,
            spectral.Inconsistent) as exc:
        rep.error = f"{type(exc).__name__}: {exc}"
        return rep, EXIT_FAIL
    return rep, EXIT_OK if rep.passed else EXIT_FAIL


def write_csv(path: str | Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="crlab", description=__doc__.splitlines()[0])
    parser.add_argument("scenario", choices=SCENARIOS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="write the JSON report here")
    parser.add_argument("--csv", help="write the per-iteration table here")
    parser.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP threads")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"ERROR {exc}", file=sys.stderr)
        return EXIT_CONFIG

    start = time.perf_counter()
    try:
        with threadpool_limits(limits=args.threads):
            report, code = execute(args.scenario, config)
    except ConfigError as exc:
        print(f"ERROR {exc}", file=sys.stderr)
        return EXIT_CONFIG
    elapsed = time.perf_counter() - start

    for a in report.assertions:
        status = "PASS" if a["pass"] else "FAIL"
        print(f"{status} {a['name']}: measured={a['measured']} {a['comparison']} {a['tolerance']}")
    if report.error:
        print(f"FAIL {report.error}")
    print(f"# {args.scenario} finished in {elapsed:.2f}s, exit {code}", file=sys.stderr)

    if args.out:
        Path(args.out).write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    if args.csv and report.table is not None:
        write_csv(args.csv, report.columns, report.table)
    return code


if __name__ == "__main__":
    sys.exit(main())

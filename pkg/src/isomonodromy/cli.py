"""Command-line entry point.

Every subcommand reads one JSON document (``--input``), writes its result to
``--output`` and a run manifest to ``<output>.manifest.json``. Exit codes:
0 pass, 2 a check exceeded its tolerance, 3 numerical failure, 4 bad input.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
import dataclasses
from dataclasses import dataclass
from importlib import metadata

import numpy as np

from . import wire
from .birkhoff import factor_column_reduction, factor_near_identity
from .core import DEFAULT_TOL, MatrixLaurentSeries
from .errors import CheckFailure, InputError, IsomonodromyError, NumericFailure
from .frobenius import (SpecialInit, classification_residuals, projectors_at,
                        random_special_init, residues_from_init, choose_n,
                        validate_special_init)
from .levelt import FuchsLocalData, formal_solution, ode_residual
from .schlesinger import (DeformationPath, FuchsianSystem, SchlesingerState, StepControl,
                          circle_loop, continue_along, min_gap, monodromy)
from .tau import PoleScan, commuting_log_tau, scan_poles, tau_along

SUBCOMMANDS = ("validate", "evolve", "monodromy", "frobenius", "tau", "scan-poles",
               "birkhoff", "levelt")

EXIT_OK, EXIT_CHECK, EXIT_NUMERIC, EXIT_INPUT = 0, 2, 3, 4

# pass thresholds of the built-in checks
SUM_DRIFT_TOL = 1e-8
EIGEN_DRIFT_TOL = 1e-7
DET_TOL = 1e-6
CLOSED_FORM_TOL = 1e-8
LEVELT_TOL = 1e-10
BIRKHOFF_TOL = 1e-8
CLASSIFICATION_TOL = 1e-6


@dataclass(frozen=True)
class RunConfig:
    subcommand: str
    input_path: str
    output_path: str
    step_ctrl: StepControl
    seed: int = 0
    quiet: bool = False
    overrides: dict = dataclasses.field(default_factory=dict)  # flags given explicitly

    def describe(self) -> dict:
        return {"subcommand": self.subcommand, "rtol": self.step_ctrl.rtol,
                "atol": self.step_ctrl.atol, "max_step": _finite(self.step_ctrl.max_step),
                "seed": self.seed}


def _finite(x: float):
    """JSON has no infinity; an unbounded setting is written as null."""
    return x if np.isfinite(x) else None


@dataclass
class Outcome:
    """What a handler produced: the artifact text, extra files and check values."""

    text: str
    checks: dict
    failures: list
    extra_files: dict | None = None


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _threads() -> int:
    raw = os.environ.get("ISOMONODROMY_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise InputError(f"ISOMONODROMY_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise InputError("ISOMONODROMY_THREADS must be at least 1")
    return n


def _system(doc) -> FuchsianSystem:
    return FuchsianSystem(wire.decode(doc["poles"]), wire.decode(doc["residues"]))


def _special_init(doc, seed: int) -> SpecialInit:
    if "special_init" in doc:
        s = doc["special_init"]
        D = wire.decode_complex(s["D"]) if "D" in s else None
        return SpecialInit(wire.decode(s["G"]), wire.decode(s["e"]), wire.decode(s["theta"]),
                           wire.decode(s["projectors"]), D)
    r = doc["random_special_init"]
    D = wire.decode_complex(r["D"]) if "D" in r else None
    return random_special_init(r["N"], np.random.default_rng(seed), D=D)


def _special_init_doc(data: SpecialInit) -> dict:
    return {"G": wire.encode(data.G), "e": wire.encode(data.e), "theta": wire.encode(data.theta),
            "projectors": wire.encode(data.projectors), "D": wire.encode_complex(data.D)}


def _path(doc, start=None) -> DeformationPath:
    pts = wire.decode(doc)
    if start is not None and not np.allclose(pts[0], start, rtol=0, atol=1e-12):
        pts = np.vstack([start, pts])
    return DeformationPath(pts)


def _max_abs(a) -> float:
    return float(np.abs(a).max()) if np.size(a) else 0.0


# ---------------------------------------------------------------------------
# handlers
# ---------------------------------------------------------------------------

def _run_validate(doc, cfg: RunConfig) -> Outcome:
    data = _special_init(doc, cfg.seed)
    report = validate_special_init(data)
    out = {"schema": wire.SCHEMA_VERSION, "residuals": report.residuals,
           "threshold": report.threshold, "passed": report.passed}
    if "random_special_init" in doc:
        out["special_init"] = _special_init_doc(data)
    return Outcome(wire.dumps(out), {"threshold": report.threshold}, report.failures())


def _run_evolve(doc, cfg: RunConfig) -> Outcome:
    system = _system(doc["system"])
    path = _path(doc["path"], system.poles)
    end = continue_along(SchlesingerState.from_system(system), path, cfg.step_ctrl)
    rep = end.conservation
    scale = max(1.0, _max_abs(system.residues))
    failures = []
    if rep.sum_drift > SUM_DRIFT_TOL * scale:
        failures.append("sum_drift")
    if rep.max_eigen_drift > EIGEN_DRIFT_TOL * scale:
        failures.append("eigen_drift")
    out = {"schema": wire.SCHEMA_VERSION,
           "final_state": {"poles": wire.encode(end.u), "residues": wire.encode(end.residues)},
           "conservation_report": rep.as_dict()}
    return Outcome(wire.dumps(out), {"sum_drift": rep.sum_drift,
                                     "max_eigen_drift": rep.max_eigen_drift}, failures)


def _run_monodromy(doc, cfg: RunConfig) -> Outcome:
    system = _system(doc["system"])
    if "loop" in doc:
        jobs = [(wire.decode_complex(doc["base"]), wire.decode(doc["loop"]))]
    else:
        r = 0.3 * min_gap(system.poles) if system.n_poles > 1 else 1.0
        jobs = [(u + r, u + circle_loop(0.0, r)) for u in system.poles]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(lambda job: monodromy(system, job[0], job[1], cfg.step_ctrl),
                                jobs))
    worst = max(m.det_residual for m in results)
    out = {"schema": wire.SCHEMA_VERSION, "monodromies": [
        {"base": wire.encode_complex(b), "matrix": wire.encode(m.matrix),
         "eigenvalues": wire.encode(m.eigenvalues), "windings": m.windings.tolist(),
         "det_residual": m.det_residual} for (b, _), m in zip(jobs, results)]}
    if "loop" in doc:
        out["matrix"] = out["monodromies"][0]["matrix"]
        out["eigenvalues"] = out["monodromies"][0]["eigenvalues"]
    return Outcome(wire.dumps(out), {"det_residual": worst},
                   ["det_residual"] if worst > DET_TOL else [])


def _run_frobenius(doc, cfg: RunConfig) -> Outcome:
    data = _special_init(doc, cfg.seed)
    base = wire.decode(doc["base"])
    path = _path(doc["path"], base) if "path" in doc else None
    n = doc.get("n")
    frame = projectors_at(data, base, path, n, cfg.step_ctrl)
    out = {"schema": wire.SCHEMA_VERSION, "u": wire.encode(frame.u), "n": int(frame.n.real),
           "projectors": wire.encode(frame.projectors), "eta": wire.encode(frame.eta),
           "eta_jac": wire.encode(frame.eta_jac), "V": wire.encode(frame.V),
           "sqrt_eta": wire.encode(frame.sqrt_eta),
           "branch_flips": [list(f) for f in frame.branch_flips],
           "min_eta_along": frame.min_eta_along}
    checks, failures = {"min_eta_along": frame.min_eta_along}, []
    if doc.get("checks"):
        report = classification_residuals(frame, data, step_ctrl=cfg.step_ctrl).as_dict()
        out["classification"] = report
        checks.update(report)
        failures = [k for k in ("cond2", "cond3", "cond4") if report[k] > CLASSIFICATION_TOL]
    return Outcome(wire.dumps(out), checks, failures)


def _pairwise_commuting(residues: np.ndarray) -> bool:
    scale = max(1.0, _max_abs(residues)) ** 2
    for i in range(len(residues)):
        for j in range(i + 1, len(residues)):
            a, b = residues[i], residues[j]
            if _max_abs(a @ b - b @ a) > 1e-12 * scale:
                return False
    return True


def _run_tau(doc, cfg: RunConfig) -> Outcome:
    metric = n = None
    if "system" in doc:
        system = _system(doc["system"])
        state = SchlesingerState.from_system(system)
    else:
        metric = _special_init(doc, cfg.seed)
        n = doc.get("n", choose_n(metric))
        path0 = wire.decode(doc["path"])[0]
        state = SchlesingerState(path0, residues_from_init(metric, n))
    path = _path(doc["path"], state.u)
    acc = tau_along(state, path, cfg.step_ctrl, metric=metric, n=n)
    out = {"schema": wire.SCHEMA_VERSION, "base": wire.encode(acc.base),
           "end": wire.encode(path.end), "log_tau": wire.encode_complex(acc.log_tau),
           "arclength": acc.arclength, "samples": len(acc.samples)}
    checks, failures = {}, []
    if _pairwise_commuting(state.residues):
        closed = sum(commuting_log_tau(a, b, state.residues)
                     for a, b in zip(path.vertices[:-1], path.vertices[1:]))
        err = abs(acc.log_tau - closed) / max(1.0, abs(closed))
        out["closed_form_log_tau"] = wire.encode_complex(closed)
        out["closed_form_error"] = err
        checks["closed_form_error"] = err
        if err > CLOSED_FORM_TOL:
            failures.append("closed_form_error")
    rows = [(s, lt.real, lt.imag, m, 0) for s, _, lt, m in acc.samples]
    csv = wire.csv_text(PoleScan.COLUMNS, rows)
    return Outcome(wire.dumps(out), checks, failures,
                   extra_files={_sibling(cfg.output_path, ".samples.csv"): csv})


def _run_scan(doc, cfg: RunConfig) -> Outcome:
    system = _system(doc["system"])
    state = SchlesingerState.from_system(system)
    path = _path(doc["path"], system.poles)
    kwargs = {}
    if "detour_radius" in doc:
        kwargs["detour_radius"] = doc["detour_radius"]
    scan = scan_poles(state, path, doc["samples"], cfg.step_ctrl, **kwargs)
    checks = {"crossings": [c.as_dict() for c in scan.crossings]}
    return Outcome(wire.csv_text(PoleScan.COLUMNS, scan.rows), checks, [])


def _series_doc(s: MatrixLaurentSeries) -> dict:
    return {"min_degree": s.min_degree, "base": wire.encode_complex(s.base),
            "coeffs": wire.encode(s.coeffs)}


def _run_birkhoff(doc, cfg: RunConfig) -> Outcome:
    sd = doc["series"]
    base = wire.decode_complex(doc["base"]) if "base" in doc else 0j
    M = MatrixLaurentSeries(wire.decode(sd["coeffs"]), sd["min_degree"], base)
    if doc.get("method") == "near_identity":
        p = M.shape[0]
        B = M - MatrixLaurentSeries.identity(p, base)
        fac = factor_near_identity(B)
        out = {"schema": wire.SCHEMA_VERSION, "U": _series_doc(fac.U), "W": _series_doc(fac.W),
               "residual": fac.residual, "iterations": fac.iterations}
        return Outcome(wire.dumps(out), {"residual": fac.residual},
                       ["residual"] if fac.residual > BIRKHOFF_TOL else [])
    fac = factor_column_reduction(M, base)
    failures = []
    if fac.residual > BIRKHOFF_TOL:
        failures.append("residual")
    if int(fac.K.sum()) != fac.winding:
        failures.append("winding")
    out = {"schema": wire.SCHEMA_VERSION, "K": [int(k) for k in fac.K],
           "winding": fac.winding, "residual": fac.residual,
           "U": _series_doc(fac.U), "W": _series_doc(fac.W),
           "min_det_U_inside": fac.min_det_U_inside,
           "min_det_W_outside": fac.min_det_W_outside}
    return Outcome(wire.dumps(out), {"residual": fac.residual, "winding": fac.winding}, failures)


def _run_levelt(doc, cfg: RunConfig) -> Outcome:
    data = FuchsLocalData.from_coeffs(wire.decode(doc["b00_series"]), doc["order"])
    sol = formal_solution(data)
    res = ode_residual(data, sol)
    scale = max(1.0, _max_abs(data.B.coeffs))
    out = {"schema": wire.SCHEMA_VERSION, "order": sol.order, "rho": wire.encode(sol.rho),
           "block_sizes": list(sol.sizes), "C": wire.encode(sol.C), "R": wire.encode(sol.R),
           "N0": wire.encode(sol.N0), "U_coeffs": [wire.encode(u) for u in sol.U_coeffs],
           "N_parts": [wire.encode(n) for n in sol.N_parts], "ode_residual": res}
    return Outcome(wire.dumps(out), {"ode_residual": res},
                   ["ode_residual"] if res > LEVELT_TOL * scale else [])


HANDLERS = {"validate": _run_validate, "evolve": _run_evolve, "monodromy": _run_monodromy,
            "frobenius": _run_frobenius, "tau": _run_tau, "scan-poles": _run_scan,
            "birkhoff": _run_birkhoff, "levelt": _run_levelt}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def _sibling(output: str, suffix: str) -> str:
    root, ext = os.path.splitext(output)
    return (root if ext in (".json", ".csv") else output) + suffix


def manifest_path(output: str) -> str:
    return output + ".manifest.json"


def _config_hash(cfg: RunConfig, doc) -> str:
    blob = json.dumps({"config": cfg.describe(), "input": doc}, sort_keys=True,
                      separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _with_document_step_ctrl(cfg: RunConfig, doc) -> RunConfig:
    """Fill settings the command line left open from the document's step_ctrl."""
    given = doc.get("step_ctrl", {})
    ctrl = StepControl(**{k: (cfg.overrides.get(k) if cfg.overrides.get(k) is not None
                              else given.get(k, getattr(StepControl, k)))
                          for k in ("rtol", "atol", "max_step")})
    return dataclasses.replace(cfg, step_ctrl=ctrl)


def run(cfg: RunConfig) -> int:
    """Execute one subcommand and write its artifacts; return the exit code."""
    t0 = time.perf_counter()
    doc = None
    status, message, outcome = EXIT_OK, "", None
    try:
        doc = wire.load_json(cfg.input_path)
        wire.validate_document(doc, cfg.subcommand)
        cfg = _with_document_step_ctrl(cfg, doc)
        outcome = HANDLERS[cfg.subcommand](doc, cfg)
        wire.write_text(cfg.output_path, outcome.text)
        for path, text in (outcome.extra_files or {}).items():
            wire.write_text(path, text)
        if outcome.failures:
            raise CheckFailure("checks over tolerance: " + ", ".join(outcome.failures))
    except CheckFailure as exc:
        status, message = EXIT_CHECK, str(exc)
    except InputError as exc:
        status, message = EXIT_INPUT, str(exc)
    except (NumericFailure, np.linalg.LinAlgError) as exc:
        status, message = EXIT_NUMERIC, f"{type(exc).__name__}: {exc}"
    except IsomonodromyError as exc:
        status, message = EXIT_NUMERIC, str(exc)
    except OSError as exc:
        status, message = EXIT_INPUT, str(exc)
    manifest = {
        "tool": "isomonodromy", "version": _version(), "subcommand": cfg.subcommand,
        "config_hash": _config_hash(cfg, doc), "wall_time_s": time.perf_counter() - t0,
        "tolerances": {"rtol": cfg.step_ctrl.rtol, "atol": cfg.step_ctrl.atol,
                       "max_step": _finite(cfg.step_ctrl.max_step),
                       "blow_up": cfg.step_ctrl.blow_up,
                       "linear_algebra": {"abs": DEFAULT_TOL.abs, "rel": DEFAULT_TOL.rel}},
        "seed": cfg.seed, "exit_code": status, "message": message,
        "checks": outcome.checks if outcome else {},
    }
    try:
        wire.write_text(manifest_path(cfg.output_path), wire.dumps(manifest))
    except OSError as exc:
        print(f"cannot write manifest: {exc}", file=sys.stderr)
        status = status or EXIT_INPUT
    if message:
        print(f"{cfg.subcommand}: {message}", file=sys.stderr)
    elif not cfg.quiet:
        print(f"{cfg.subcommand}: ok -> {cfg.output_path}")
    return status


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (argparse would exit with 2)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="isomonodromy", description="Numerical isomonodromic deformations.")
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="SUBCOMMAND",
                                parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--input", required=True, help="input JSON document")
        p.add_argument("--output", required=True, help="output file")
        p.add_argument("--rtol", type=float, help=f"default {StepControl.rtol}")
        p.add_argument("--atol", type=float, help=f"default {StepControl.atol}")
        p.add_argument("--max-step", type=float, help="arclength cap per step")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--quiet", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"rtol": args.rtol, "atol": args.atol, "max_step": args.max_step}
    try:
        ctrl = StepControl(**{k: v for k, v in overrides.items() if v is not None})
    except InputError as exc:
        print(f"{args.subcommand}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    cfg = RunConfig(args.subcommand, args.input, args.output, ctrl, args.seed, args.quiet,
                    overrides)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())

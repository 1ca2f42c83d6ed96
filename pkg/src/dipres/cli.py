"""Scenario-driven batch runner.

A scenario is a YAML document::

    system:
      energies: [0.0, 0.01]
      dipole: [[0.0, 0.1], [0.1, 0.5]]
    field: {kind: constant, E0: 0.02}
    experiment: amplitude_scan
    params:
      grid: {start: -2.0, stop: 2.0, num: 201}
    output: runs/fig
    seed: 0

``dipres run FILE`` writes ``<output>_<experiment>.csv`` (plus companion CSVs
for some experiments) and ``<output>_meta.yaml``. The meta file holds the fully
resolved scenario, library versions and a result summary. It is itself a valid
scenario file, so re-running it reproduces the outputs byte for byte.

Exit codes: 0 success, 1 parse/validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import math
import os
import platform
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
import pydantic
import scipy
import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator

from . import __version__
from .dyson import dyson_terms, population_from_terms
from .errors import DipresError, ParseError, ValidationError
from .fast import propagating_pulse_suppression, sign_independence_sweep
from .fields import (
    Constant,
    FIELD_KINDS,
    Lobe,
    Sine,
    VectorPotentialPulse,
    analytic_spectrum,
    numeric_spectrum,
    spectral_landmarks,
)
from .propagator import PropagationOptions, WaveState, propagate
from .resonance import amplitude_scan, find_resonance_points, sign_asymmetry_experiment
from .slow import pf_max_table
from .system import new_system

EXPERIMENTS = (
    "propagate",
    "amplitude_scan",
    "sign_scan",
    "resonance_points",
    "fast_limit_suite",
    "spectra",
    "dyson_compare",
)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# --- schema --------------------------------------------------------------------


class SystemSpec(_Strict):
    energies: list[float] = Field(min_length=2)
    dipole: list[list[float]]

    @field_validator("dipole")
    @classmethod
    def _square(cls, v, info):
        n = len(info.data.get("energies", []))
        if len(v) != n or any(len(row) != n for row in v):
            raise ValueError(f"dipole must be {n}x{n} to match energies")
        return v


class ConstantSpec(_Strict):
    kind: Literal["constant"]
    E0: float


class SineSpec(_Strict):
    kind: Literal["sine"]
    A: float
    omega: float = Field(gt=0)
    phase: float = 0.0


class LobeSpec(_Strict):
    kind: Literal["lobe"]
    A: float
    sigma: float = Field(gt=0)
    t_center: float


class PulseSpec(_Strict):
    kind: Literal["vp_pulse"]
    A: float
    omega0: float = Field(gt=0)
    phi: float = 0.0
    alpha: float = Field(default=1.0, gt=0)
    t_max: Optional[float] = None


FieldSpec = Annotated[Union[ConstantSpec, SineSpec, LobeSpec, PulseSpec], Field(discriminator="kind")]


class Grid(_Strict):
    start: float
    stop: float
    num: int = Field(ge=2)

    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.num)


class _Pair(_Strict):
    initial: int = Field(default=0, ge=0)
    final: int = Field(default=1, ge=0)


class _Window(_Strict):
    t_start: Optional[float] = None
    t_end: Optional[float] = None


class _Numerics(_Strict):
    method: Literal["cfm4", "midpoint", "rk4"] = "cfm4"
    step_tol: float = Field(default=1e-3, gt=0)


class PropagateParams(_Window, _Numerics):
    initial: int = Field(default=0, ge=0)
    n_out: int = Field(default=2000, ge=2)


class AmplitudeScanParams(_Pair, _Window, _Numerics):
    grid: Optional[Grid] = None
    values: Optional[list[float]] = None
    units: Literal["A0", "absolute"] = "A0"
    refine: bool = True
    analytic_points: int = Field(default=2001, ge=2)


class SignScanParams(_Pair, _Window, _Numerics):
    mode: Literal["asymmetry", "omega_sweep"] = "asymmetry"
    omega0s: Optional[list[float]] = None
    fixed_area: bool = False


class ResonanceParams(_Pair):
    window: Optional[tuple[float, float]] = None
    width_tol: float = Field(default=0.1, gt=0)
    n_grid: int = Field(default=10_000, ge=10)


class FastSuiteParams(_Pair, _Numerics):
    omega0s: list[float] = Field(min_length=2)
    fixed_area: bool = True


class SpectraParams(_Strict):
    omega: Optional[Grid] = None
    include_numeric: bool = False


class DysonParams(_Pair, _Window, _Numerics):
    n_max: int = Field(default=2, ge=1, le=3)
    n_out: int = Field(default=201, ge=2)
    compare_propagator: bool = True


PARAMS = {
    "propagate": PropagateParams,
    "amplitude_scan": AmplitudeScanParams,
    "sign_scan": SignScanParams,
    "resonance_points": ResonanceParams,
    "fast_limit_suite": FastSuiteParams,
    "spectra": SpectraParams,
    "dyson_compare": DysonParams,
}


class Scenario(_Strict):
    system: SystemSpec
    field: FieldSpec
    experiment: Literal[EXPERIMENTS]
    params: dict = Field(default_factory=dict)
    output: str = "dipres"
    seed: int = 0

    def build_system(self):
        return new_system(self.system.energies, self.system.dipole)

    def build_field(self):
        d = self.field.model_dump()
        kind = d.pop("kind")
        if kind == "vp_pulse" and d.get("t_max") is None:
            d.pop("t_max")
            return VectorPotentialPulse.centered(d["A"], d["omega0"], d["alpha"], d["phi"])
        return FIELD_KINDS[kind](**d)

    @property
    def p(self) -> BaseModel:
        return PARAMS[self.experiment].model_validate(self.params)


# --- parsing -------------------------------------------------------------------


def _key(loc) -> str:
    return ".".join(str(x) for x in loc if not (isinstance(x, str) and x in FIELD_KINDS))


def _raise_validation(exc: pydantic.ValidationError, prefix: tuple = ()):
    errs = exc.errors()
    err = next((e for e in errs if e["type"] == "extra_forbidden"), errs[0])
    key = _key(prefix + tuple(err["loc"]))
    raise ValidationError(f"{key}: {err['msg']}", key) from None


def parse_scenario(text: str) -> Scenario:
    """Parse and fully validate a scenario document.

    A meta file written by :func:`run` is accepted too; its ``scenario`` entry is used.

    Raises
    ------
    ParseError
        Malformed YAML, with 1-based line and column.
    ValidationError
        Schema violations; ``key`` names the offending entry.
    """
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line, col = (mark.line + 1, mark.column + 1) if mark else (0, 0)
        raise ParseError(f"{exc.problem or exc}", line, col) from None
    except yaml.YAMLError as exc:
        raise ParseError(str(exc), 0, 0) from None
    if not isinstance(raw, dict):
        raise ParseError("scenario must be a mapping", 1, 1)
    if "provenance" in raw and "scenario" in raw:
        raw = raw["scenario"]
    try:
        sc = Scenario.model_validate(raw)
    except pydantic.ValidationError as exc:
        _raise_validation(exc)
    try:
        params = sc.p
    except pydantic.ValidationError as exc:
        _raise_validation(exc, ("params",))
    try:
        sysm = sc.build_system()
        fld = sc.build_field()
    except (DipresError, ValueError) as exc:
        key = "system" if "dipole" in str(exc) or "energ" in str(exc) else "field"
        raise ValidationError(f"{key}: {exc}", key) from None
    _check_semantics(sc.experiment, params, sysm, fld)
    return sc.model_copy(update={"params": params.model_dump(mode="json")})


def _check_semantics(exp, p, sysm, fld):
    def bad(key, msg):
        raise ValidationError(f"params.{key}: {msg}", f"params.{key}")

    for key in ("initial", "final"):
        if hasattr(p, key) and getattr(p, key) >= sysm.n:
            bad(key, f"level {getattr(p, key)} does not exist in a {sysm.n}-level system")
    if hasattr(p, "final") and exp != "propagate" and p.initial == p.final:
        bad("final", "must differ from initial")
    pulse = isinstance(fld, (VectorPotentialPulse, Lobe))
    if hasattr(p, "t_end") and p.t_end is None and not pulse and exp != "amplitude_scan":
        bad("t_end", f"required for a {fld.kind} field")
    if hasattr(p, "t_start") and p.t_start is not None and p.t_end is not None and not p.t_end > p.t_start:
        bad("t_end", "must exceed t_start")
    if exp == "amplitude_scan":
        if (p.grid is None) == (p.values is None):
            bad("grid", "give exactly one of grid or values")
        vals = p.grid.values() if p.grid is not None else np.asarray(p.values, float)
        if np.any(vals == 0) or not np.all(np.isfinite(vals)):
            bad("grid", "amplitudes must be finite and nonzero")
        if not isinstance(fld, Constant) and p.t_end is None and not pulse:
            bad("t_end", f"required for a {fld.kind} field")
    if exp in ("fast_limit_suite", "spectra") and not isinstance(fld, VectorPotentialPulse):
        raise ValidationError(f"field: {exp} needs a vp_pulse field", "field")
    if exp == "sign_scan" and p.mode == "omega_sweep":
        if not isinstance(fld, VectorPotentialPulse):
            raise ValidationError("field: omega_sweep needs a vp_pulse field", "field")
        if not p.omega0s or len(p.omega0s) < 2:
            bad("omega0s", "at least two carrier frequencies are required")
    if exp == "resonance_points" and p.window is None and not isinstance(fld, (Sine, VectorPotentialPulse, Lobe)):
        bad("window", f"required for a {fld.kind} field")


def load_scenario(path: str | os.PathLike) -> Scenario:
    return parse_scenario(Path(path).read_text())


# --- execution -----------------------------------------------------------------


@dataclass
class Table:
    suffix: str
    header: list[str]
    columns: list

    def render(self) -> str:
        lines = [",".join(self.header)]
        cols = [np.asarray(c) for c in self.columns]
        n = len(cols[0]) if cols else 0
        for r in range(n):
            cells = []
            for c in cols:
                v = c[r]
                cells.append(str(v) if isinstance(v, str) or c.dtype.kind in "OU" else "%.17g" % float(v))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


@dataclass
class RunReport:
    files: list[Path]
    summary: dict = field(default_factory=dict)


def _opts(p, **extra) -> PropagationOptions:
    return PropagationOptions(method=p.method, step_tol=p.step_tol, **extra)


def _window(p, fld):
    if p.t_start is not None or p.t_end is not None:
        lo, hi = (p.t_start or 0.0), p.t_end
        if hi is None:
            hi = fld.support(8.0)[1] if isinstance(fld, VectorPotentialPulse) else fld.t_ref + 8 * fld.sigma
        return float(lo), float(hi)
    if isinstance(fld, VectorPotentialPulse):
        return fld.support(8.0)
    if isinstance(fld, Lobe):
        return fld.t_ref - 8 * fld.sigma, fld.t_ref + 8 * fld.sigma
    return None


def _run_propagate(sc, sysm, fld, p, threads):
    lo, hi = _window(p, fld)
    tr = propagate(sysm, fld, WaveState.basis(sysm.n, p.initial, lo), hi, _opts(p, n_out=p.n_out))
    rows = tr.csv_rows()
    tables = [Table("", tr.csv_header(), list(rows.T))]
    summary = {"final_populations": [float(x) for x in tr.populations[-1]], "n_steps": tr.n_steps,
               "max_norm_error": float(tr.norm_error.max())}
    return tables, summary


def _run_amplitude_scan(sc, sysm, fld, p, threads):
    vals = p.grid.values() if p.grid is not None else np.asarray(p.values, float)
    de, dm = sysm.delta_eps(p.final, p.initial), sysm.delta_mu(p.final, p.initial)
    A0 = de / dm if dm != 0 else math.inf
    if p.units == "A0":
        if not math.isfinite(A0):
            raise DipresError("units A0 need a nonzero dipole difference")
        vals = vals * A0
    win = _window(p, fld) if not isinstance(fld, Constant) else None
    res = amplitude_scan(sysm, p.initial, p.final, fld, vals, win, threads, _opts(p), p.refine)
    tables = [Table("", res.csv_header(), list(res.csv_rows().T))]
    if res.pf_max_analytic is not None:
        x = np.linspace(vals.min() / A0, vals.max() / A0, p.analytic_points)
        x = x[x != 0]
        tab = pf_max_table(sysm, p.initial, p.final, x)
        tables.append(Table("_analytic", ["E_over_A0", "d", "pf_max_analytic"], list(tab.T)))
    summary = {"A0": float(A0), "peak_A": res.peak_A, "peak_value": res.peak_value, "fwhm": res.fwhm,
               "fwhm_over_A0": res.fwhm_over_A0, "max_norm_error": res.norm_error}
    return tables, summary


def _run_sign_scan(sc, sysm, fld, p, threads):
    if p.mode == "asymmetry":
        rep = sign_asymmetry_experiment(sysm, p.initial, p.final, fld, _window(p, fld), _opts(p))
        tab = Table("", ["pf_max_plus", "pf_max_minus", "contrast"], [[rep.pf_plus], [rep.pf_minus], [rep.contrast]])
        return [tab], {"regime": rep.regime, "note": rep.note, "contrast": rep.contrast,
                       "max_norm_error": rep.norm_error}
    rep = sign_independence_sweep(sysm, fld, p.initial, p.final, p.omega0s, p.fixed_area, threads, _opts(p))
    return [Table("", rep.csv_header(), list(rep.csv_rows().T))], {"slope": rep.slope, "max_norm_error": rep.norm_error}


def _run_resonance(sc, sysm, fld, p, threads):
    win = p.window
    if win is None:
        if isinstance(fld, Sine):
            win = (0.0, 2 * math.pi / fld.omega)
        elif isinstance(fld, VectorPotentialPulse):
            win = fld.support(6.0)
        else:
            win = (fld.t_ref - 6 * fld.sigma, fld.t_ref + 6 * fld.sigma)
    pts = find_resonance_points(sysm, p.initial, p.final, fld, win, p.n_grid, p.width_tol)
    cols = [
        [q.delta for q in pts],
        np.array([q.kind.value for q in pts], dtype=object),
        [q.interval[0] for q in pts],
        [q.interval[1] for q in pts],
    ]
    return [Table("", ["delta", "kind", "t_lo", "t_hi"], cols)], {"n_points": len(pts), "window": [float(w) for w in win]}


def _run_fast_suite(sc, sysm, fld, p, threads):
    sign = sign_independence_sweep(sysm, fld, p.initial, p.final, p.omega0s, False, threads, _opts(p))
    supp = propagating_pulse_suppression(sysm, fld, p.initial, p.final, p.omega0s, p.fixed_area, threads, _opts(p))
    tables = [
        Table("", sign.csv_header(), list(sign.csv_rows().T)),
        Table("_suppression", supp.csv_header(), list(supp.csv_rows().T)),
    ]
    summary = {"sign_delta_slope": sign.slope, "suppression_slope": supp.slope,
               "max_norm_error": max(sign.norm_error, supp.norm_error)}
    return tables, summary


def _run_spectra(sc, sysm, fld, p, threads):
    w = p.omega.values() if p.omega is not None else np.linspace(0.0, fld.bandwidth, 401)
    sp, ss = analytic_spectrum(fld, w)
    cols = [w, sp.real, sp.imag, ss.real, ss.imag, np.abs(sp + ss)]
    header = ["omega", "Re(S_P)", "Im(S_P)", "Re(S_S)", "Im(S_S)", "abs_S"]
    if p.include_numeric:
        cols.append(np.abs(numeric_spectrum(fld, w)))
        header.append("abs_S_numeric")
    lm = spectral_landmarks(fld)
    summary = {"omega_c": lm.omega_c, "omega_p": lm.omega_p, "omega_peak_closed_form": lm.omega_peak_closed_form,
               "validity_ratio": lm.validity_ratio, "approx_valid": bool(lm.approx_valid)}
    return [Table("", header, cols)], summary


def _run_dyson(sc, sysm, fld, p, threads):
    lo, hi = _window(p, fld)
    t = np.linspace(lo, hi, p.n_out)
    terms = dyson_terms(sysm, fld, p.initial, p.final, p.n_max, hi, t0=lo, t_eval=t)
    P, _ = population_from_terms(terms)
    header, cols = ["t"], [t]
    for term in terms:
        header += [f"Re(I{term.order})", f"Im(I{term.order})"]
        cols += [term.values.real, term.values.imag]
    header.append("P_dyson")
    cols.append(P)
    summary = {"max_quadrature_err": max(float(np.max(term.quadrature_err)) for term in terms)}
    if p.compare_propagator:
        tr = propagate(sysm, fld, WaveState.basis(sysm.n, p.initial, lo), hi, _opts(p, t_eval=t))
        Pn = tr.populations[:, p.final]
        header += ["P_propagator", "abs_diff"]
        cols += [Pn, np.abs(Pn - P)]
        summary["max_abs_diff"] = float(np.max(np.abs(Pn - P)))
        summary["max_norm_error"] = float(tr.norm_error.max())
    return [Table("", header, cols)], summary


_RUNNERS = {
    "propagate": _run_propagate,
    "amplitude_scan": _run_amplitude_scan,
    "sign_scan": _run_sign_scan,
    "resonance_points": _run_resonance,
    "fast_limit_suite": _run_fast_suite,
    "spectra": _run_spectra,
    "dyson_compare": _run_dyson,
}


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    return x


def run(scenario: Scenario, out: str | None = None, threads: int = 1, seed: int | None = None) -> RunReport:
    """Execute ``scenario`` and write its outputs atomically.

    All files are first written to temporaries next to their targets and only
    renamed once every output is complete, so a failure leaves nothing behind.
    """
    sc = scenario.model_copy(update={k: v for k, v in (("output", out), ("seed", seed)) if v is not None})
    sysm, fld, p = sc.build_system(), sc.build_field(), sc.p
    np.random.seed(sc.seed)
    try:
        tables, summary = _RUNNERS[sc.experiment](sc, sysm, fld, p, threads)
    except DipresError as exc:
        exc.args = _with_context(exc, sc)
        raise
    meta = {
        "scenario": sc.model_dump(mode="json"),
        "provenance": {
            "dipres": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "pydantic": pydantic.VERSION,
            "python": platform.python_version(),
        },
        "summary": _plain(summary),
    }
    prefix = Path(sc.output)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    payload = [(Path(f"{prefix}_{sc.experiment}{t.suffix}.csv"), t.render()) for t in tables]
    payload.append((Path(f"{prefix}_meta.yaml"), yaml.safe_dump(meta, sort_keys=False)))
    temps = []
    try:
        for target, text in payload:
            fd, tmp = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
            temps.append(tmp)
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
        for (target, _), tmp in zip(payload, temps):
            os.replace(tmp, target)
    finally:
        for tmp in temps:
            if os.path.exists(tmp):
                os.unlink(tmp)
    return RunReport([t for t, _ in payload], meta["summary"])


def _with_context(exc, sc):
    args = list(exc.args) or [""]
    args[0] = f"[{sc.experiment}, output {sc.output}] {args[0]}"
    return tuple(args)


# --- command line --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dipres", description="Dipole-resonance experiment runner.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="Run a scenario file.")
    r.add_argument("scenario", help="YAML scenario (or a previous run's meta file).")
    r.add_argument("--out", help="Output prefix (overrides the scenario's 'output').")
    r.add_argument("--threads", type=int, default=1, help="Worker threads for scans.")
    r.add_argument("--seed", type=int, help="Seed recorded in the meta file (overrides 'seed').")
    v = sub.add_parser("validate", help="Parse and validate a scenario file.")
    v.add_argument("scenario")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        sc = load_scenario(args.scenario)
    except ParseError as exc:
        print(f"{args.scenario}:{exc.line}:{exc.column}: parse error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"{args.scenario}: invalid scenario: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"{args.scenario}: {exc}", file=sys.stderr)
        return 1
    if args.command == "validate":
        print(f"{args.scenario}: ok ({sc.experiment})")
        return 0
    try:
        rep = run(sc, args.out, max(1, args.threads), args.seed)
    except (DipresError, ValueError, OSError) as exc:
        print(f"{args.scenario}: run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    for f in rep.files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())

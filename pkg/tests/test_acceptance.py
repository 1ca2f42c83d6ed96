"""Acceptance criteria 1-11.

Each test records one PASS/FAIL line (shown in the terminal summary and on
stdout) and asserts the combined verdict. Computations are cached so that
criterion 11 can audit the norm errors of every propagation in 1-10.
"""

import functools
import math
import time

import numpy as np
import pytest
import yaml
from scipy import integrate

from dipres.cli import parse_scenario, run
from dipres.dyson import check_iterated_bound, dyson_term, dyson_terms, iterated_field_integral, population_from_terms
from dipres.errors import BoundViolated
from dipres.fast import m1_fast, m_n_fast, m_series_structure, propagating_pulse_suppression, sign_independence_sweep
from dipres.fields import Constant, Sine, VectorPotentialPulse, analytic_spectrum, numeric_spectrum, spectral_landmarks
from dipres.propagator import WaveState, propagate
from dipres.resonance import (
    ResonanceKind,
    amplitude_scan,
    find_resonance_points,
    intermediate_decomposition_2ls,
    intermediate_decomposition_3ls,
)
from dipres.slow import pf_max, pf_max_inverted, pf_max_strong_field, rabi_population
from dipres.system import new_system

SEED = 20261015

SYS2 = new_system([0.0, 0.01], [[0.0, 0.1], [0.1, 0.5]])
SYS3 = new_system([0.0, 0.01, 0.025], [[0.0, 0.1, 0.0], [0.1, 0.5, 0.1], [0.0, 0.1, 0.8]])


def _pair(mu, dmu=0.5, de=0.01):
    return new_system([0.0, de], [[0.0, mu], [mu, dmu]])


def _record(log, n, checks):
    passed = all(ok for _, ok, _ in checks)
    body = "; ".join(f"{name} {'ok' if ok else 'FAILED'} [{detail}]" for name, ok, detail in checks)
    line = f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {body}"
    log[n] = line
    print(line)
    assert passed, line


def _rel(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / np.max(np.abs(b)))


# --- computations ------------------------------------------------------------


@functools.cache
def _c1():
    checks, norm = [], 0.0
    for d in (0.0, 0.5, 2.0):
        E = 0.01 / (2 * 0.1 * d + 0.5)
        T = 2 * math.pi / (0.1 * E * math.sqrt(1 + d * d))
        start = time.perf_counter()
        tr = propagate(SYS2, Constant(E), WaveState.basis(2, 0, 0.0), T, n_out=2001)
        elapsed = time.perf_counter() - start
        err = float(np.max(np.abs(tr.populations[:, 1] - rabi_population(d, 0.1 * E * tr.times))))
        norm = max(norm, float(tr.norm_error.max()))
        checks.append((f"d={d} error", err <= 1e-8, f"{err:.2e} <= 1e-8"))
        checks.append((f"d={d} runtime", elapsed < 1.0, f"{elapsed:.3f} s < 1 s"))
    return checks, norm


def _fig_grid():
    x = np.linspace(-3.0, 3.0, 197)
    x = x[np.abs(x) > 1e-12]
    return np.sort(np.concatenate([x, [-100.0, -1.0, 1.0, 100.0]]))


@functools.cache
def _c2():
    checks, norm = [], 0.0
    x = _fig_grid()
    for r in (0.1, 1.0):
        mu, dmu = 0.5 * r, 0.5
        s = _pair(mu)
        A0 = 0.02
        start = time.perf_counter()
        res = amplitude_scan(s, 0, 1, Constant(A0), x * A0)
        elapsed = time.perf_counter() - start
        norm = max(norm, res.norm_error)
        P = dict(zip(x, res.pf_max_numeric))
        strong = pf_max_strong_field(mu, dmu)
        far = max(abs(P[100.0] - strong), abs(P[-100.0] - strong)) / strong
        dev = float(np.max(np.abs(res.pf_max_numeric - pf_max(s, 0, 1, x * A0))))
        checks += [
            (f"r={r} peak", res.peak_A == A0 and abs(res.peak_value - 1) <= 1e-6,
             f"E={res.peak_A / A0:g} A0, 1-P={1 - res.peak_value:.1e}"),
            (f"r={r} -A0", abs(P[-1.0] - pf_max_inverted(mu, dmu)) <= 1e-6,
             f"{abs(P[-1.0] - pf_max_inverted(mu, dmu)):.1e} <= 1e-6"),
            (f"r={r} 100A0", far <= 0.01, f"{far:.2%} <= 1%"),
            (f"r={r} curves", dev <= 1e-6, f"{dev:.1e} <= 1e-6"),
            (f"r={r} runtime", elapsed < 30.0, f"{x.size} points in {elapsed:.1f} s"),
        ]
    return checks, norm


@functools.cache
def _c3():
    checks = []
    A0 = 0.02
    d = math.asin(0.5)
    cases = [
        ("|A|>=A0", 2 * A0, [d, math.pi - d], ResonanceKind.DIPOLE_RESONANCE),
        ("A0>A>0", 0.5 * A0, [math.pi / 2], ResonanceKind.FIELD_EXTREMUM),
        ("0>A>-A0", -0.5 * A0, [3 * math.pi / 2], ResonanceKind.FIELD_EXTREMUM),
    ]
    start = time.perf_counter()
    for name, A, expect, kind in cases:
        pts = find_resonance_points(SYS2, 0, 1, Sine(A, 1.0), (0.0, 2 * math.pi))
        got = [p.delta for p in pts]
        err = max(abs(a - b) for a, b in zip(got, expect)) if len(got) == len(expect) else math.inf
        ok = err <= 1e-6 and all(p.kind is kind for p in pts)
        checks.append((name, ok, f"delta error {err:.1e}"))
    elapsed = time.perf_counter() - start
    checks.append(("runtime", elapsed < 1.0, f"{elapsed:.3f} s < 1 s"))
    return checks, None


@functools.cache
def _c4():
    rep = sign_independence_sweep(SYS2, VectorPotentialPulse.centered(0.02, 1.0, 2.0), 0, 1, [0.5, 1.0, 2.0])
    at1 = rep.delta[1] / rep.pf_max[1]
    checks = [
        ("decreasing", bool(np.all(np.diff(rep.delta) < 0)), ", ".join(f"{v:.2e}" for v in rep.delta)),
        ("slope", rep.slope >= 1.0, f"{rep.slope:.2f} >= 1"),
        ("Omega0=1", at1 < 1e-2, f"delta/max P_f = {at1:.1e} < 1e-2"),
    ]
    return checks, rep.norm_error


@functools.cache
def _c5():
    tpl = VectorPotentialPulse.centered(0.02, 0.5, 1.0, math.pi / 2)
    rep = propagating_pulse_suppression(SYS2, tpl, 0, 1, [0.5, 1.0, 2.0])
    return [("exponent", abs(rep.slope - 2.0) <= 0.3, f"{rep.slope:.3f} = 2 +- 0.3")], rep.norm_error


def _structure(n):
    return {t.f_index: {(s, frozenset(ws)) for s, ws in t.products} for t in m_series_structure(n)}


GOLDEN = {
    1: {(1, 0): {(1, frozenset({(1, 0)}))}},
    2: {(2, 1): {(1, frozenset({(2, 1), (1, 0)}))}, (2, 0): {(-1, frozenset({(2, 0), (1, 0)}))}},
    3: {
        (3, 2): {(1, frozenset({(3, 2), (2, 1), (1, 0)})), (-1, frozenset({(3, 2), (2, 0), (1, 0)}))},
        (3, 1): {(-1, frozenset({(3, 1), (2, 1), (1, 0)}))},
        (3, 0): {(1, frozenset({(3, 0), (2, 0), (1, 0)}))},
    },
}


@functools.cache
def _c6():
    f = VectorPotentialPulse.centered(0.02, 1.0, 2.0)
    lo, hi = f.support(8.0)
    t = np.linspace(lo, hi, 801)
    during = np.abs(t - f.t_max) <= 3 * f.sigma
    I1 = dyson_term(SYS3, f, 0, 1, 1, hi, t0=lo, t_eval=t).values
    I2 = dyson_term(SYS3, f, 0, 2, 2, hi, t0=lo, t_eval=t).values
    d1 = float(np.max(np.abs(m1_fast(SYS3, f, 0, 1, t, t0=lo) - I1)[during]) / np.max(np.abs(I1)))
    d2 = float(np.max(np.abs(m_n_fast(SYS3, f, (0, 1, 2), 2, t, t0=lo) - I2)[during]) / np.max(np.abs(I2)))
    golden = all(_structure(n) == GOLDEN[n] for n in (1, 2, 3))
    return [
        ("M1", d1 < 0.05, f"{d1:.2%} < 5%"),
        ("M2", d2 < 0.05, f"{d2:.2%} < 5%"),
        ("golden M1-M3", golden, "exact structural match"),
    ], None


def _quad(g, f, w, n_sigma=14.0):
    lo, hi = -n_sigma * f.sigma, n_sigma * f.sigma

    def e(u):
        return float(g(u + f.t_ref))

    kw = dict(limit=500, epsabs=1e-14, epsrel=1e-11, wvar=w)
    return integrate.quad(e, lo, hi, weight="cos", **kw)[0] - 1j * integrate.quad(e, lo, hi, weight="sin", **kw)[0]


def _half_max_edges(w, S):
    k = int(np.argmax(S))
    half = 0.5 * S[k]
    up = k + int(np.argmax(S[k:] < half))
    dn = k - int(np.argmax(S[k::-1] < half))

    def cross(a, b):
        return w[a] + (half - S[a]) * (w[b] - w[a]) / (S[b] - S[a])

    return w[k], cross(dn + 1, dn), cross(up - 1, up)


@functools.cache
def _c7():
    f = VectorPotentialPulse.centered(0.02, 0.5, 3.0)
    # 20 frequencies spanning the band where |S| >= 1e-6 max|S|
    w = np.linspace(0.1, 0.95, 20)
    sp, ss = analytic_spectrum(f, w)
    ep = max(abs(sp[k] - _quad(f.principal, f, x)) / abs(sp[k]) for k, x in enumerate(w))
    es = max(abs(ss[k] - _quad(f.switch, f, x)) / abs(ss[k]) for k, x in enumerate(w))
    lm = spectral_landmarks(f)
    grid = np.linspace(0.0, 1.5, 1501)
    peak, lo, hi = _half_max_edges(grid, np.abs(numeric_spectrum(f, grid)))
    hw = 0.5 * (hi - lo)
    a, b = f.support(12.0)
    area = abs(float(f.integral(a, b)))
    return [
        ("S_P", ep <= 1e-8, f"{ep:.1e} <= 1e-8"),
        ("S_S", es <= 1e-8, f"{es:.1e} <= 1e-8"),
        ("validity", lm.validity_ratio > 100, f"6 alpha^4/Omega0^2 = {lm.validity_ratio:g}"),
        ("Omega_P", abs(lm.omega_p - peak) <= hw, f"|{lm.omega_p:.4f} - {peak:.4f}| <= {hw:.4f}"),
        ("Omega_c", abs(lm.omega_c - hi) <= hw, f"|{lm.omega_c:.4f} - {hi:.4f}| <= {hw:.4f}"),
        ("zero area", area <= 1e-10 * f.A * f.sigma, f"{area:.1e}"),
    ], None


@functools.cache
def _c8():
    rng = np.random.default_rng(SEED)
    worst, dual, violations = 0.0, 0.0, 0
    for _ in range(100):
        f = VectorPotentialPulse.centered(
            rng.uniform(0.01, 1.0), rng.uniform(0.1, 2.0), rng.uniform(1.0, 3.0), rng.uniform(0.0, 2 * math.pi)
        )
        lo, hi = f.support(6.0)
        t = np.linspace(lo, hi, 41)[1:]
        for n in range(1, 5):
            try:
                worst = max(worst, check_iterated_bound(f, n, t, t0=lo).max_ratio)
            except BoundViolated:
                violations += 1
            if n <= 3:
                a = iterated_field_integral(f, n, t, "time", lo)
                b = iterated_field_integral(f, n, t, "spectral", lo)
                dual = max(dual, _rel(b, a))
    return [
        ("bound n=1..4", violations == 0 and worst < 1, f"seed {SEED}, max |I_n|/bound {worst:.3g}"),
        ("dual evaluation", dual <= 1e-8, f"{dual:.1e} <= 1e-8"),
    ], None


@functools.cache
def _c9():
    f = VectorPotentialPulse.centered(0.05, 0.05, 1.0, 0.3)
    lo, hi = f.support(6.0)
    t = np.linspace(lo, hi, 41)
    d2 = intermediate_decomposition_2ls(SYS2, f, t, t0=lo)
    e2 = _rel(d2.total, dyson_term(SYS2, f, 0, 1, 1, hi, t0=lo, t_eval=t).values)
    d3 = intermediate_decomposition_3ls(SYS3, f, (0, 1, 2), t, t0=lo)
    e3 = _rel(d3.total, dyson_term(SYS3, f, 0, 2, 2, hi, t0=lo, t_eval=t).values)
    big = new_system([0.0, 0.002, 0.01], [[0.0, 0.1, 0.0], [0.1, -10.0, 0.1], [0.0, 0.1, 0.5]])
    dl = intermediate_decomposition_3ls(big, Constant(0.02), (0, 1, 2), [500.0, 1000.0, 2000.0])
    ratio = float(np.max(np.abs(dl.term3) / np.abs(dl.term2)))
    return [
        ("2LS", e2 <= 1e-8, f"{e2:.1e} <= 1e-8"),
        ("3LS", e3 <= 1e-6, f"{e3:.1e} <= 1e-6"),
        ("large detuning", ratio < 0.1, f"|term3/term2| = {ratio:.3f} < 0.1"),
    ], None


C10_CASES = {
    "2LS": (new_system([0.0, 0.01], [[0.0, 1.0], [1.0, 0.5]]), 1, 1),
    "3LS": (new_system([0.0, 0.01, 0.025], [[0.0, 3.0, 0.0], [3.0, 0.5, 3.0], [0.0, 3.0, 0.8]]), 2, 2),
}


@functools.cache
def _c10():
    f = VectorPotentialPulse.centered(0.05, 0.05, 1.0, 0.0)
    lo, hi = f.support(8.0)
    lams = np.array([1e-2, 1e-3, 1e-4])
    checks, norm = [], 0.0
    for name, (base, final, s) in C10_CASES.items():
        errs = []
        for lam in lams:
            sysl = base.scaled_couplings(lam)
            tr = propagate(sysl, f, WaveState.basis(sysl.n, 0, lo), hi)
            norm = max(norm, float(tr.norm_error.max()))
            P, _ = population_from_terms(dyson_terms(sysl, f, 0, final, s, hi, t0=lo, t_eval=[hi]))
            errs.append(abs(float(tr.populations[-1, final]) - float(P[-1])))
        slope = float(np.polyfit(np.log(lams), np.log(errs), 1)[0])
        expect = 2 * (s + 1)
        checks.append((name, abs(slope - expect) <= 0.5, f"slope {slope:.3f} vs {expect} +- 0.5"))
    return checks, norm


COMPUTE = {1: _c1, 2: _c2, 3: _c3, 4: _c4, 5: _c5, 6: _c6, 7: _c7, 8: _c8, 9: _c9, 10: _c10}


# --- tests ---------------------------------------------------------------------


@pytest.mark.parametrize("n", sorted(COMPUTE))
def test_criterion(n, acceptance_log):
    _record(acceptance_log, n, COMPUTE[n]()[0])


def test_criterion_11_norm_and_determinism(acceptance_log, tmp_path):
    norms = {n: c()[1] for n, c in COMPUTE.items() if c()[1] is not None}
    worst = max(norms.values())
    text = (
        "system: {energies: [0.0, 0.01], dipole: [[0.0, 0.1], [0.1, 0.5]]}\n"
        "field: {kind: constant, E0: 0.02}\nexperiment: amplitude_scan\n"
        "params: {grid: {start: -2.0, stop: 2.0, num: 20}}\n"
    )
    sc = parse_scenario(text)
    a = run(sc, out=str(tmp_path / "a" / "x"), threads=3)
    b = run(sc, out=str(tmp_path / "b" / "x"), threads=1)
    same_csv = all(p.read_bytes() == q.read_bytes() for p, q in zip(a.files[:-1], b.files[:-1]))
    metas = [yaml.safe_load(r.files[-1].read_text()) for r in (a, b)]
    for m in metas:
        m["scenario"].pop("output")
    f = VectorPotentialPulse.centered(0.02, 1.0, 2.0)
    lo, hi = f.support(8.0)
    runs = [propagate(SYS3, f, WaveState.basis(3, 0, lo), hi).amplitudes.tobytes() for _ in range(2)]
    _record(acceptance_log, 11, [
        ("norm", worst <= 1e-10, f"max {worst:.1e} over criteria {sorted(norms)}"),
        ("CSV bytes", same_csv, f"{len(a.files) - 1} CSVs identical across runs and thread counts"),
        ("meta", metas[0] == metas[1], "identical apart from the output prefix"),
        ("trajectory bytes", runs[0] == runs[1], "repeated propagation identical"),
    ])

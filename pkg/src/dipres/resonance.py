"""Intermediate regime: phase-slope analysis, resonance-point finder, term
decompositions of the first two Dyson orders, and amplitude/sign scans.

For a pair (k, l) the transfer phase is g(t) = d_eps_kl (t - t0) - d_mu_kl F(t)
with slope g'(t) = d_eps_kl - d_mu_kl E(t). Resonance points are the minima of
g'^2 in time: d/dt g'^2 = 0 with d^2/dt^2 g'^2 > 0.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import DegenerateFlat, InfiniteResonance
from .fields import Constant
from .propagator import PropagationOptions, WaveState, propagate
from .quadrature import PanelGrid
from .slow import pf_max
from .system import (
    COUPLING_THRESHOLD,
    NLevelSystem,
    TransferPath,
    classify_regime,
    make_path,
    shortest_path,
)

WIDTH_TOL = 0.1


def g_prime(sys: NLevelSystem, k: int, l: int, fld, t):
    """d_eps_kl - d_mu_kl E(t)."""
    return sys.delta_eps(k, l) - sys.delta_mu(k, l) * np.asarray(fld.value(t))


class ResonanceKind(enum.Enum):
    DIPOLE_RESONANCE = "dipole_resonance"
    FIELD_EXTREMUM = "field_extremum"


@dataclass(frozen=True)
class ResonancePoint:
    delta: float
    kind: ResonanceKind
    interval: tuple[float, float]


def _dgsq(de, dm, fld, t):
    """First and second time derivatives of g'^2."""
    gp = de - dm * np.asarray(fld.value(t))
    d1 = np.asarray(fld.derivative(t, 1))
    d2 = np.asarray(fld.derivative(t, 2))
    return -2 * dm * gp * d1, 2 * (dm * d1) ** 2 - 2 * dm * gp * d2


def find_resonance_points(
    sys: NLevelSystem,
    i: int,
    f: int,
    fld,
    window: tuple[float, float],
    n_grid: int = 10_000,
    width_tol: float = WIDTH_TOL,
) -> list[ResonancePoint]:
    """All minima of g'^2 (pair i -> f) inside ``window``.

    Roots of d/dt g'^2 are bracketed on ``n_grid`` points and bisected to
    1e-10 of the window length. A point is a dipole resonance when
    |g'(delta)| <= width_tol |d_eps_fi|, otherwise a field extremum. Its
    interval is the surrounding stretch with |g'| <= width_tol |d_eps_fi|
    (empty intervals collapse to ``(delta, delta)``); overlapping intervals are merged.

    Raises
    ------
    DegenerateFlat
        If g'^2 does not vary on the window (constant field or d_mu = 0).
    """
    t0, t1 = map(float, window)
    span = t1 - t0
    de, dm = sys.delta_eps(f, i), sys.delta_mu(f, i)
    t = np.linspace(t0, t1, n_grid)
    h, _ = _dgsq(de, dm, fld, t)
    gp = de - dm * np.asarray(fld.value(t))
    scale = max(float(np.max(gp**2)), 1e-300) / span
    if float(np.max(np.abs(h))) <= 1e-12 * scale:
        raise DegenerateFlat("g'^2 is constant on the window; no isolated resonance points", (t0, t1))
    xtol = 1e-10 * span

    def hfun(x):
        return float(_dgsq(de, dm, fld, x)[0])

    roots = []
    s = np.sign(h)
    for k in range(n_grid - 1):
        if s[k] == 0:
            if 0 < k and s[k - 1] != 0:
                roots.append(t[k])
            continue
        if s[k] * s[k + 1] < 0:
            roots.append(optimize.brentq(hfun, t[k], t[k + 1], xtol=xtol, rtol=4 * np.finfo(float).eps))
    tol = width_tol * abs(de)
    out = []
    for r in roots:
        _, h2 = _dgsq(de, dm, fld, r)
        if not float(h2) > 0:
            continue
        gpr = abs(float(g_prime(sys, f, i, fld, r)))
        kind = ResonanceKind.DIPOLE_RESONANCE if gpr <= tol else ResonanceKind.FIELD_EXTREMUM
        out.append([float(r), kind, _interval(sys, i, f, fld, r, tol, t, gp, xtol)])
    # merge overlapping intervals
    out.sort(key=lambda p: p[0])
    groups: list[list[int]] = []
    for idx, p in enumerate(out):
        lo, hi = p[2]
        if groups and lo <= max(out[j][2][1] for j in groups[-1]) and lo < hi:
            groups[-1].append(idx)
        else:
            groups.append([idx])
    for g in groups:
        lo = min(out[j][2][0] for j in g)
        hi = max(out[j][2][1] for j in g)
        for j in g:
            out[j][2] = (lo, hi)
    return [ResonancePoint(d, k, iv) for d, k, iv in out]


def _interval(sys, i, f, fld, r, tol, t, gp, xtol):
    def over(x):
        return abs(float(g_prime(sys, f, i, fld, x))) - tol

    if over(r) > 0:
        return (r, r)
    k = int(np.clip(np.searchsorted(t, r), 1, t.size - 1))
    inside = np.abs(gp) <= tol
    lo_k = k - 1
    while lo_k >= 0 and inside[lo_k]:
        lo_k -= 1
    hi_k = k
    while hi_k < t.size and inside[hi_k]:
        hi_k += 1
    lo = t[0] if lo_k < 0 else optimize.brentq(over, t[lo_k], min(t[lo_k + 1], r), xtol=xtol)
    hi = t[-1] if hi_k >= t.size else optimize.brentq(over, max(t[hi_k - 1], r), t[hi_k], xtol=xtol)
    return (float(lo), float(hi))


# --- decompositions ----------------------------------------------------------


def _grid_for(sys, fld, times, t0, rate_extra=0.0, order=16):
    times = np.asarray(times, dtype=float)
    breaks = np.unique(np.concatenate([[t0], times]))
    tt = np.linspace(t0, breaks[-1], 4001)
    emax = float(np.max(np.abs(fld.value(tt))))
    rate = float(np.ptp(sys.energies)) + float(np.ptp(np.diag(sys.dipole))) * emax + fld.bandwidth + rate_extra
    width = min(1.0 / rate if rate > 0 else np.inf, (breaks[-1] - t0) / 8)
    return PanelGrid(breaks, width, order), np.searchsorted(breaks, times)


@dataclass(frozen=True)
class Decomposition2LS:
    times: np.ndarray
    term1: np.ndarray
    term2: np.ndarray

    @property
    def total(self):
        return self.term1 + self.term2


def intermediate_decomposition_2ls(sys: NLevelSystem, fld, t, i: int = 0, f: int = 1, t0: float = 0.0) -> Decomposition2LS:
    """Split I^(1)_fi into the boundary term and the d_eps-weighted integral.

    term1 = -(mu/d_mu) [exp(i g) - 1],  term2 = i (mu d_eps / d_mu) int_{t0}^t exp(i g),
    whose sum is exactly I^(1)_fi = i mu int E exp(i g).
    """
    de, dm, mu = sys.delta_eps(f, i), sys.delta_mu(f, i), float(sys.dipole[f, i])
    if abs(dm) < COUPLING_THRESHOLD:
        raise InfiniteResonance("d_mu = 0: the decomposition divides by the dipole difference")
    times = np.atleast_1d(np.asarray(t, dtype=float))
    grid, sel = _grid_for(sys, fld, times, t0)
    x = grid.nodes
    g = de * (x - t0) - dm * np.asarray(fld.integral(t0, x))
    J = grid.at_breaks(grid.cumulative(np.exp(1j * g)))[sel]
    gt = de * (times - t0) - dm * np.asarray(fld.integral(t0, times))
    term1 = -(mu / dm) * np.expm1(1j * gt)
    term2 = 1j * mu * de / dm * J
    return Decomposition2LS(times, term1, term2)


@dataclass(frozen=True)
class Decomposition3LS:
    times: np.ndarray
    term1: np.ndarray
    term2: np.ndarray
    term3: np.ndarray

    @property
    def total(self):
        return self.term1 + self.term2 + self.term3


def intermediate_decomposition_3ls(sys: NLevelSystem, fld, path: TransferPath | tuple, t, t0: float = 0.0) -> Decomposition3LS:
    """Split I^(2)_fi along i -> b -> f into three groups.

    With K = mu_fb mu_bi / (d_mu_fi d_mu_bi) and J_kl = int_{t0}^t exp(i g_kl):

    term1 = K [exp(i g_fi) - 1]                         (sign independent)
    term2 = -i K d_eps_fi J_fi                          (overall resonance)
    term3 = i K d_mu_fi int E exp(i g_fb) [1 + i d_eps_bi J_bi]   (stepwise correction)
    """
    if not isinstance(path, TransferPath):
        path = make_path(sys, path)
    if path.steps != 2:
        raise ValueError("need a two-step path")
    i, b, f = path.levels
    dm_fi, dm_bi = sys.delta_mu(f, i), sys.delta_mu(b, i)
    if abs(dm_fi) < COUPLING_THRESHOLD or abs(dm_bi) < COUPLING_THRESHOLD:
        raise InfiniteResonance("a dipole difference on the path vanishes")
    K = sys.dipole[f, b] * sys.dipole[b, i] / (dm_fi * dm_bi)
    times = np.atleast_1d(np.asarray(t, dtype=float))
    grid, sel = _grid_for(sys, fld, times, t0)
    x = grid.nodes
    F = np.asarray(fld.integral(t0, x))
    E = np.asarray(fld.value(x))

    def g(k, l, tt, FF):
        return sys.delta_eps(k, l) * (tt - t0) - sys.delta_mu(k, l) * FF

    J_fi = grid.cumulative(np.exp(1j * g(f, i, x, F)))
    J_bi = grid.cumulative(np.exp(1j * g(b, i, x, F)))
    inner = grid.cumulative(E * np.exp(1j * g(f, b, x, F)) * (1 + 1j * sys.delta_eps(b, i) * J_bi))
    Ft = np.asarray(fld.integral(t0, times))
    term1 = K * np.expm1(1j * g(f, i, times, Ft))
    term2 = -1j * K * sys.delta_eps(f, i) * grid.at_breaks(J_fi)[sel]
    term3 = 1j * K * dm_fi * grid.at_breaks(inner)[sel]
    return Decomposition3LS(times, term1, term2, term3)


# --- scans ---------------------------------------------------------------------


@dataclass(frozen=True)
class ScanResult:
    A: np.ndarray
    A0: float
    pf_max_numeric: np.ndarray
    peak_A: float
    peak_value: float
    fwhm: float
    pf_max_analytic: np.ndarray | None = None
    t_at_max: np.ndarray | None = field(default=None, repr=False)
    norm_error: float = 0.0

    @property
    def A_over_A0(self) -> np.ndarray:
        return self.A / self.A0

    @property
    def fwhm_over_A0(self) -> float:
        return self.fwhm / abs(self.A0)

    def contrast(self) -> np.ndarray:
        """(P(A) - P(-A)) / (P(A) + P(-A)) where -A is also on the grid, else NaN."""
        out = np.full(self.A.shape, np.nan)
        for k, a in enumerate(self.A):
            j = np.nonzero(np.isclose(self.A, -a, rtol=1e-12, atol=0))[0]
            if j.size:
                p, m = self.pf_max_numeric[k], self.pf_max_numeric[j[0]]
                out[k] = (p - m) / (p + m)
        return out

    def csv_header(self) -> list[str]:
        cols = ["A", "A_over_A0", "pf_max_numeric"]
        if self.pf_max_analytic is not None:
            cols.append("pf_max_analytic")
        return cols + ["contrast"]

    def csv_rows(self) -> np.ndarray:
        cols = [self.A, self.A_over_A0, self.pf_max_numeric]
        if self.pf_max_analytic is not None:
            cols.append(self.pf_max_analytic)
        return np.column_stack(cols + [self.contrast()])


def _constant_window(sys: NLevelSystem, E: float, periods: float = 2.0) -> float:
    w = np.linalg.eigvalsh(sys.hamiltonian(E))
    gap = float(np.min(np.diff(w)))
    return periods * 2 * math.pi / gap


def _time_window(sys, fld, t_window):
    if t_window is not None:
        return t_window
    if isinstance(fld, Constant):
        return 0.0, _constant_window(sys, fld.E0)
    if hasattr(fld, "support"):
        return fld.support(8.0)
    if hasattr(fld, "sigma"):
        return fld.t_ref - 8 * fld.sigma, fld.t_ref + 8 * fld.sigma
    raise ValueError("a time window is required for this field kind")


def max_population(sys, fld, i, f, t_window=None, opts=None, refine=True):
    """(max_t P_f, t at max, max norm error) for one propagation from level ``i``."""
    lo, hi = _time_window(sys, fld, t_window)
    tr = propagate(sys, fld, WaveState.basis(sys.n, i, lo), hi, opts)
    P = tr.populations[:, f]
    k = int(np.argmax(P))
    best, tbest = float(P[k]), float(tr.times[k])
    if refine and 0 < k < P.size - 1:
        start = WaveState(tr.amplitudes[k - 1] / np.linalg.norm(tr.amplitudes[k - 1]), float(tr.times[k - 1]))
        a, b = float(tr.times[k - 1]), float(tr.times[k + 1])
        base = opts or PropagationOptions()

        def neg(x):
            if x <= a:
                return -float(np.abs(start.amplitudes[f]) ** 2)
            r = propagate(sys, fld, start, x, base, n_out=2, t_eval=None)
            return -float(np.abs(r.final[f]) ** 2)

        res = optimize.minimize_scalar(neg, bounds=(a, b), method="bounded", options={"xatol": 1e-12 * (hi - lo)})
        if -res.fun > best:
            best, tbest = float(-res.fun), float(res.x)
    return best, tbest, float(tr.norm_error.max())


def _fwhm(A, P, k):
    half = 0.5 * P[k]

    def cross(j0, step):
        j = j0
        while 0 <= j + step < A.size:
            if P[j + step] < half:
                a1, a2, p1, p2 = A[j], A[j + step], P[j], P[j + step]
                return a1 + (half - p1) * (a2 - a1) / (p2 - p1)
            j += step
        return None

    left, right = cross(k, -1), cross(k, 1)
    if left is None or right is None:
        return math.inf
    return float(abs(right - left))


def amplitude_scan(
    sys: NLevelSystem,
    i: int,
    f: int,
    template,
    A_grid,
    t_window=None,
    threads: int = 1,
    opts: PropagationOptions | None = None,
    refine: bool = True,
) -> ScanResult:
    """max_t P_f for each amplitude of ``template`` on ``A_grid``.

    Constant templates use a window of two periods of the slowest eigen-gap of
    H(A) for each A; pulses use their support. The peak is the grid maximum;
    the linewidth is the full width at half that maximum with linear
    interpolation between grid points (infinite if half maximum is not
    reached on both sides).
    """
    A = np.asarray(A_grid, dtype=float)
    if not np.all(np.isfinite(A)) or np.any(A == 0):
        raise ValueError("amplitudes must be finite and nonzero")
    path = shortest_path(sys, i, f)
    de, dm = path.overall_delta
    A0 = de / dm if abs(dm) >= COUPLING_THRESHOLD else math.inf

    def run(a):
        return max_population(sys, template.with_amplitude(a), i, f, t_window, opts, refine)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(run, A))
    else:
        res = [run(a) for a in A]
    P = np.array([r[0] for r in res])
    k = int(np.argmax(P))
    analytic = None
    if isinstance(template, Constant) and sys.n == 2:
        analytic = np.asarray(pf_max(sys, i, f, A))
    return ScanResult(
        A=A,
        A0=A0,
        pf_max_numeric=P,
        peak_A=float(A[k]),
        peak_value=float(P[k]),
        fwhm=_fwhm(A, P, k),
        pf_max_analytic=analytic,
        t_at_max=np.array([r[1] for r in res]),
        norm_error=max(r[2] for r in res),
    )


@dataclass(frozen=True)
class SignAsymmetryReport:
    pf_plus: float
    pf_minus: float
    contrast: float
    regime: str
    note: str
    norm_error: float


def sign_asymmetry_experiment(
    sys: NLevelSystem, i: int, f: int, fld, t_window=None, opts: PropagationOptions | None = None
) -> SignAsymmetryReport:
    """max_t P_f under +E and -E and the contrast (P+ - P-) / (P+ + P-)."""
    pp, _, n1 = max_population(sys, fld, i, f, t_window, opts)
    pm, _, n2 = max_population(sys, fld.negated(), i, f, t_window, opts)
    path = shortest_path(sys, i, f)
    try:
        regime = classify_regime(sys, path, fld).kind.value
    except Exception as exc:  # spectral bounds undefined for this field
        regime = f"unclassified ({exc})"
    note = ""
    if abs(path.overall_delta[1]) < COUPLING_THRESHOLD:
        note = "InfiniteResonance: equal permanent dipoles, no dipole resonance exists"
    total = pp + pm
    return SignAsymmetryReport(pp, pm, (pp - pm) / total if total > 0 else 0.0, regime, note, max(n1, n2))

"""Rapidly varying fields: closed-form transfer amplitudes M_n and the
sign-independence and propagating-pulse suppression experiments.

Along a path l_0 = i, ..., l_n with F(x) = int_0^x E,

    p_n(x)     = exp(i sum_j d_eps_{l_{j+1} l_j} x) prod_j mu_{l_{j+1} l_j}
    w_ba       = sum_{j=a}^{b-1} d_mu_{l_{j+1} l_j}
    f_ba(x)    = 1 - exp(-i w_ba F(x))

and M_n = p_n sum_a c^(n)_a f_na. The coefficients follow from one more
fast-limit integration per step:

    c^(1)_0       = 1 / w_10
    c^(n+1)_n     = sum_a c^(n)_a / w_{n+1,n}
    c^(n+1)_a     = -c^(n)_a / w_{n+1,a}      (a < n)

Each coefficient is kept symbolically as a signed sum of inverse products of
w's, so the printed low-order forms can be compared term by term.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateW, NotZeroArea
from .fields import VectorPotentialPulse, omega_bounds
from .propagator import PropagationOptions, WaveState, propagate
from .system import COUPLING_THRESHOLD, NLevelSystem, TransferPath, make_path

#: |w| below this counts as degenerate.
W_EPS = 1e-12

# A product is (sign, ((b, a), ...)) meaning sign / prod w_ba.
Product = tuple[int, tuple[tuple[int, int], ...]]


@dataclass(frozen=True)
class MTerm:
    """One f-term of M_n: ``f_{n,alpha}`` times a signed sum of inverse w-products."""

    f_index: tuple[int, int]
    products: tuple[Product, ...]


def m_series_structure(n: int) -> list[MTerm]:
    """Symbolic terms of M_n, one per ``alpha = n-1, ..., 0``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    coeff: dict[int, list[Product]] = {0: [(1, ((1, 0),))]}
    for m in range(1, n):
        new: dict[int, list[Product]] = {}
        new[m] = [(s, ws + ((m + 1, m),)) for a in range(m) for s, ws in coeff[a]]
        for a in range(m):
            new[a] = [(-s, ws + ((m + 1, a),)) for s, ws in coeff[a]]
        coeff = new
    return [MTerm((n, a), tuple(coeff[a])) for a in range(n - 1, -1, -1)]


@dataclass(frozen=True)
class FastTermSet:
    """Path quantities entering the fast-limit amplitudes."""

    levels: tuple[int, ...]
    d_eps: tuple[float, ...]
    mu: tuple[float, ...]
    w: np.ndarray
    n0: int
    max_phase: float = field(default=float("nan"))

    def p(self, n: int, x):
        x = np.asarray(x, dtype=float)
        return np.exp(1j * sum(self.d_eps[:n]) * x) * math.prod(self.mu[:n])

    def f(self, b: int, a: int, area):
        return -np.expm1(-1j * self.w[b, a] * np.asarray(area))


def fast_term_set(sys: NLevelSystem, path: TransferPath | tuple, fld=None, area_tol: float = 1e-8) -> FastTermSet:
    """Build p, w and f data for ``path``; ``n0`` is 2 for zero-area fields, else 1."""
    if not isinstance(path, TransferPath):
        path = make_path(sys, path)
    lv = path.levels
    s = path.steps
    dm = [sys.delta_mu(lv[j + 1], lv[j]) for j in range(s)]
    w = np.zeros((s + 1, s + 1))
    for b in range(s + 1):
        for a in range(b):
            w[b, a] = sum(dm[a:b])
            w[a, b] = -w[b, a]
    n0 = 1
    phase = float("nan")
    if fld is not None:
        lo, hi = _support(fld)
        area = float(fld.integral(lo, hi))
        n0 = 2 if abs(area) <= area_tol * _area_scale(fld) else 1
        tt = np.linspace(lo, hi, 4001)
        phase = float(np.max(np.abs(w)) * np.max(np.abs(fld.integral(lo, tt))))
    return FastTermSet(
        lv,
        tuple(sys.delta_eps(lv[j + 1], lv[j]) for j in range(s)),
        tuple(float(sys.dipole[lv[j + 1], lv[j]]) for j in range(s)),
        w,
        n0,
        phase,
    )


def _support(fld):
    if hasattr(fld, "sigma"):
        return fld.t_ref - 12 * fld.sigma, fld.t_ref + 12 * fld.sigma
    raise NotZeroArea(f"{fld.kind} field has no finite support")


def _area_scale(fld) -> float:
    return abs(fld.amplitude) * fld.sigma


def _g(w, F):
    """(1 - exp(-i w F)) / w with its limit i F at w = 0."""
    if abs(w) < W_EPS:
        return 1j * F
    return -np.expm1(-1j * w * F) / w


def _dg(w, F):
    """d/dw of :func:`_g`; F^2 / 2 at w = 0."""
    if abs(w) < W_EPS:
        return F * F / 2 + 0j
    e = np.exp(-1j * w * F)
    return (1j * F * e * w - (1 - e)) / w**2


def m1_fast(sys: NLevelSystem, fld, i: int, l1: int, t, t0: float = 0.0):
    """(mu/d_mu) exp(i d_eps t) [1 - exp(-i d_mu F(t))], F = int_{t0}^t E.

    Uses i mu exp(i d_eps t) F when |d_mu| < 1e-12.
    """
    t = np.asarray(t, dtype=float)
    de, dm, mu = sys.delta_eps(l1, i), sys.delta_mu(l1, i), float(sys.dipole[l1, i])
    F = np.asarray(fld.integral(t0, t), dtype=float)
    ph = np.exp(1j * de * (t - t0))
    if abs(dm) < COUPLING_THRESHOLD:
        return 1j * mu * ph * F
    return mu / dm * ph * -np.expm1(-1j * dm * F)


def m_n_fast(sys: NLevelSystem, fld, path: TransferPath | tuple, n: int, t, t0: float = 0.0):
    """Fast-limit amplitude M_n for the first ``n`` steps of ``path``.

    Degenerate w (zero partial dipole sums) are resolved analytically for
    n <= 2 and raise :class:`DegenerateW` for n >= 3.
    """
    ts = fast_term_set(sys, path)
    if n > len(ts.levels) - 1:
        raise ValueError(f"path has only {len(ts.levels) - 1} steps")
    t = np.asarray(t, dtype=float)
    F = np.asarray(fld.integral(t0, t), dtype=float)
    p = ts.p(n, t - t0)
    w = ts.w
    if n == 1:
        return p * _g(w[1, 0], F)
    if n == 2:
        if abs(w[1, 0]) < W_EPS:
            return -p * _dg(w[2, 1], F)
        return p / w[1, 0] * (_g(w[2, 1], F) - _g(w[2, 0], F))
    for b in range(1, n + 1):
        for a in range(b):
            if abs(w[b, a]) < W_EPS:
                raise DegenerateW(f"w[{b},{a}] = 0 at order {n}")
    total = np.zeros(np.shape(F), dtype=complex)
    for term in m_series_structure(n):
        c = sum(s / math.prod(w[b, a] for b, a in ws) for s, ws in term.products)
        total = total + c * ts.f(*term.f_index, F)
    return p * total


# --- numerical experiments ---------------------------------------------------


def _regime_ratio(sys, lv, fld) -> float:
    wmin, _ = omega_bounds(fld)
    gaps = [abs(sys.delta_eps(a, b)) for a in lv for b in lv if a < b]
    return max(gaps) / wmin if wmin > 0 else math.inf


@dataclass(frozen=True)
class SignReport:
    delta: float
    max_pf: float
    rho: float
    C: float
    multi_path: bool
    note: str
    norm_error: float
    pf_plus: np.ndarray = field(repr=False, default=None)
    pf_minus: np.ndarray = field(repr=False, default=None)
    times: np.ndarray = field(repr=False, default=None)


def sign_independence_check(
    sys: NLevelSystem,
    fld,
    i: int,
    f: int,
    t_end: float,
    c0: WaveState | None = None,
    t0: float = 0.0,
    opts: PropagationOptions | None = None,
) -> SignReport:
    """Propagate under +E and -E and report max_t |P_f^+ - P_f^-|.

    ``rho = max|d_eps| / Omega_min`` over the levels i, f (and a unique path
    between them when one exists); ``C = delta / rho``. If the initial state
    populates more than one level the report only flags the expected
    multi-path interference.
    """
    from .system import shortest_path

    c0 = c0 or WaveState.basis(sys.n, i, t0)
    occupied = np.count_nonzero(np.abs(c0.amplitudes) > 0)
    try:
        lv = shortest_path(sys, i, f).levels
    except Exception:
        lv = (i, f)
    rho = _regime_ratio(sys, lv, fld)
    tp = propagate(sys, fld, c0, t_end, opts)
    tm = propagate(sys, fld.negated(), c0, t_end, opts)
    pp, pm = tp.populations[:, f], tm.populations[:, f]
    delta = float(np.max(np.abs(pp - pm)))
    multi = occupied > 1
    note = "multi-path interference; sign dependence expected" if multi else ""
    return SignReport(
        delta=delta,
        max_pf=float(max(pp.max(), pm.max())),
        rho=rho,
        C=delta / rho if rho > 0 else math.inf,
        multi_path=multi,
        note=note,
        norm_error=float(max(tp.norm_error.max(), tm.norm_error.max())),
        pf_plus=pp,
        pf_minus=pm,
        times=tp.times,
    )


def fit_loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


@dataclass(frozen=True)
class SweepReport:
    omega0: np.ndarray
    pf_plus: np.ndarray
    pf_minus: np.ndarray
    delta: np.ndarray
    rho: np.ndarray
    slope: float
    norm_error: float
    pf_max: np.ndarray = field(default=None)

    def csv_header(self) -> list[str]:
        return ["omega0", "pf_final_plus", "pf_final_minus", "delta", "rho"]

    def csv_rows(self) -> np.ndarray:
        return np.column_stack([self.omega0, self.pf_plus, self.pf_minus, self.delta, self.rho])


def _pulse_run(sys, fld, i, f, opts):
    lo, hi = fld.support(8.0)
    c0 = WaveState.basis(sys.n, i, lo)
    tp = propagate(sys, fld, c0, hi, opts)
    tm = propagate(sys, fld.negated(), c0, hi, opts)
    return tp, tm


def sign_independence_sweep(
    sys: NLevelSystem,
    template: VectorPotentialPulse,
    i: int,
    f: int,
    omega0s,
    fixed_area: bool = False,
    threads: int = 1,
    opts: PropagationOptions | None = None,
) -> SweepReport:
    """Sign difference max_t |P_f^+ - P_f^-| across a carrier-frequency sweep.

    ``slope`` is the fitted exponent of delta against d_eps / Omega0 (the
    largest gap on the path). With ``fixed_area`` the amplitude scales with
    Omega0 so that the vector-potential amplitude A / Omega0 stays fixed.
    """
    return _sweep(sys, template, i, f, omega0s, fixed_area, threads, opts, final_only=False)


def propagating_pulse_suppression(
    sys: NLevelSystem,
    template,
    i: int,
    f: int,
    omega0s,
    fixed_area: bool = True,
    threads: int = 1,
    opts: PropagationOptions | None = None,
) -> SweepReport:
    """Final P_f after a zero-area pulse for each Omega0; ``slope`` is the fitted
    exponent of P_f(final) against d_eps / Omega0 (expected near 2).

    Raises :class:`NotZeroArea` if the template field has a nonzero time integral.
    """
    lo, hi = _support(template)
    if abs(float(template.integral(lo, hi))) > 1e-8 * _area_scale(template):
        raise NotZeroArea(f"field area {float(template.integral(lo, hi)):.3g} is not zero")
    return _sweep(sys, template, i, f, omega0s, fixed_area, threads, opts, final_only=True)


def _sweep(sys, template, i, f, omega0s, fixed_area, threads, opts, final_only):
    from .system import shortest_path

    omega0s = np.asarray(omega0s, dtype=float)
    lv = shortest_path(sys, i, f).levels
    gap = max(abs(sys.delta_eps(a, b)) for a in lv for b in lv if a < b)

    def make(w0):
        A = template.A * (w0 / template.omega0 if fixed_area else 1.0)
        s = template.alpha * math.pi * math.sqrt(math.log(2)) / w0
        return VectorPotentialPulse(A, w0, template.phi, template.alpha, 12 * s)

    fields = [make(w) for w in omega0s]

    def run(fl):
        return _pulse_run(sys, fl, i, f, opts)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            res = list(ex.map(run, fields))
    else:
        res = [run(fl) for fl in fields]
    pp = np.array([tp.populations[-1, f] for tp, _ in res])
    pm = np.array([tm.populations[-1, f] for _, tm in res])
    delta = np.array([float(np.max(np.abs(tp.populations[:, f] - tm.populations[:, f]))) for tp, tm in res])
    rho = np.array([_regime_ratio(sys, lv, fl) for fl in fields])
    norm = max(float(max(tp.norm_error.max(), tm.norm_error.max())) for tp, tm in res)
    pmax = np.array([max(tp.populations[:, f].max(), tm.populations[:, f].max()) for tp, tm in res])
    x = gap / omega0s
    y = pp if final_only else delta
    slope = fit_loglog_slope(x, y) if np.all(y > 0) else float("nan")
    return SweepReport(omega0s, pp, pm, delta, rho, slope, norm, pmax)


def analytic_pf_fast(sys: NLevelSystem, fld, path, t, t0: float = 0.0):
    """|M_s|^2 for the full path length s (single initial state, unique path)."""
    if not isinstance(path, TransferPath):
        path = make_path(sys, path)
    return np.abs(m_n_fast(sys, fld, path, path.steps, t, t0)) ** 2

"""Time-ordered (Dyson) series terms and repeated integrals of the field.

In the interaction picture phi_k = exp(i int [eps_k - mu_kk E]) c_k the equation of
motion is i dphi/dt = C(t) phi with

    C_kl(t) = -mu_kl E(t) exp(i [d_eps_kl (t - t0) - d_mu_kl int_{t0}^t E]),   C_kk = 0.

Starting from level i, the order-n term of phi_f is

    I^(n)_fi(t) = (-i)^n int_{t0}^t dt1 C_f.(t1) int_{t0}^{t1} dt2 C..(t2) ... C_.i(tn),

evaluated here as n nested running integrals on a shared Chebyshev panel grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundViolated, OrderTooHigh, QuadratureNotConverged
from .quadrature import PanelGrid
from .system import NLevelSystem

DEFAULT_MAX_ORDER = 3


def level_phases(sys: NLevelSystem, fld, t, t0: float = 0.0) -> np.ndarray:
    """g_k(t) = eps_k (t - t0) - mu_kk int_{t0}^t E, stacked along a new first axis."""
    t = np.asarray(t, dtype=float)
    area = np.asarray(fld.integral(t0, t), dtype=float)
    eps = sys.energies.reshape((-1,) + (1,) * t.ndim)
    mu = np.diag(sys.dipole).reshape((-1,) + (1,) * t.ndim)
    return eps * (t - t0) - mu * area


def c_kernel(sys: NLevelSystem, fld, k: int, l: int, t, t0: float = 0.0):
    """Interaction-picture coupling C_kl(t); zero on the diagonal."""
    t = np.asarray(t, dtype=float)
    if k == l:
        return np.zeros(t.shape, dtype=complex)
    area = np.asarray(fld.integral(t0, t), dtype=float)
    g = sys.delta_eps(k, l) * (t - t0) - sys.delta_mu(k, l) * area
    return -sys.dipole[k, l] * np.asarray(fld.value(t)) * np.exp(1j * g)


@dataclass(frozen=True, eq=False)
class DysonTerm:
    order: int
    initial: int
    final: int
    times: np.ndarray
    values: np.ndarray
    quadrature_err: float


def _max_rate(sys, fld, t0, t1) -> float:
    tt = np.linspace(t0, t1, 4001)
    emax = float(np.max(np.abs(fld.value(tt))))
    de = float(np.ptp(sys.energies))
    dm = float(np.ptp(np.diag(sys.dipole)))
    return de + dm * emax + float(fld.bandwidth) + float(np.max(np.abs(sys.dipole))) * emax


def _nested(sys, fld, grid: PanelGrid, i: int, n: int, t0: float) -> list[np.ndarray]:
    """All orders 1..n of (-i)^m J^(m) for every level, sampled on the grid nodes."""
    x = grid.nodes
    E = np.asarray(fld.value(x))
    e = np.exp(1j * level_phases(sys, fld, x, t0))  # (N, P, K)
    mu = sys.dipole - np.diag(np.diag(sys.dipole))
    # J^(1)_l = int C_li
    y = np.zeros((sys.n,) + x.shape, dtype=complex)
    y[i] = np.conj(e[i])
    out = []
    J = None
    for m in range(n):
        src = y if m == 0 else np.conj(e) * J
        integrand = -E * e * np.einsum("kl,l...->k...", mu, src)
        J = grid.cumulative(integrand)
        out.append((-1j) ** (m + 1) * J)
    return out


def dyson_terms(
    sys: NLevelSystem,
    fld,
    i: int,
    f: int,
    n_max: int,
    t_end: float,
    t0: float = 0.0,
    t_eval=None,
    n_out: int = 201,
    rtol: float = 1e-10,
    max_order: int = DEFAULT_MAX_ORDER,
    panel_order: int = 16,
    max_refinements: int = 4,
) -> list[DysonTerm]:
    """Dyson terms of orders 1..n_max from ``i`` to ``f`` sampled at the output times.

    The grid is refined (panels halved) until the change at the output times is
    below ``rtol`` times the largest |I^(n)| (plus a floor of 1e-15); the reported
    ``quadrature_err`` is that last change.
    """
    if n_max < 1:
        raise ValueError("order must be at least 1")
    if max_refinements < 1:
        raise ValueError("max_refinements must be at least 1")
    if n_max > max_order:
        raise OrderTooHigh(f"order {n_max} exceeds the configured maximum {max_order}")
    times = np.linspace(t0, t_end, n_out) if t_eval is None else np.asarray(t_eval, dtype=float)
    breaks = np.unique(np.concatenate([[t0], times]))
    rate = _max_rate(sys, fld, t0, t_end)
    width = min(2.0 / rate if rate > 0 else np.inf, (t_end - t0) / 8)
    grid = PanelGrid(breaks, width, panel_order)
    prev = [grid.at_breaks(J[f]) for J in _nested(sys, fld, grid, i, n_max, t0)]
    for _ in range(max_refinements):
        grid = grid.refined()
        cur = [grid.at_breaks(J[f]) for J in _nested(sys, fld, grid, i, n_max, t0)]
        errs = [float(np.max(np.abs(a - b))) for a, b in zip(cur, prev)]
        scale = [float(np.max(np.abs(a))) for a in cur]
        prev = cur
        if all(er <= rtol * sc + 1e-15 for er, sc in zip(errs, scale)):
            break
    else:
        raise QuadratureNotConverged(f"Dyson quadrature change {max(errs):.3g} after refinement")
    sel = np.searchsorted(breaks, times)
    return [
        DysonTerm(m + 1, i, f, times, v[sel], e)
        for m, (v, e) in enumerate(zip(prev, errs))
    ]


def dyson_term(sys, fld, i: int, f: int, n: int, t_end: float, **kw) -> DysonTerm:
    """Single Dyson term I^(n)_fi; see :func:`dyson_terms`."""
    return dyson_terms(sys, fld, i, f, n, t_end, **kw)[-1]


def population_from_terms(terms) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(P_total, P_interference)`` for P = |sum I^(n)|^2.

    The interference part is 2 sum_{n<m} Re[conj(I^(n)) I^(m)].
    """
    vals = [np.asarray(t.values if isinstance(t, DysonTerm) else t) for t in terms]
    diag = sum(np.abs(v) ** 2 for v in vals)
    inter = np.zeros_like(diag)
    for a in range(len(vals)):
        for b in range(a + 1, len(vals)):
            inter = inter + 2 * np.real(np.conj(vals[a]) * vals[b])
    return diag + inter, inter


# --- repeated field integrals -------------------------------------------------


def modified_trig(kind: str, n: int, omega, t, phi, series_cut: float = 0.5):
    """Modified sine/cosine of order n: the power series of sin/cos(Omega t + phi)
    in tau = Omega t with its first n terms removed, divided by Omega^n.

    For |tau| < ``series_cut`` the tail series is summed directly to avoid
    cancellation; the result is then finite at Omega = 0.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if kind not in ("sin", "cos"):
        raise ValueError("kind must be 'sin' or 'cos'")
    trig = np.sin if kind == "sin" else np.cos
    omega, t, phi = np.broadcast_arrays(
        np.asarray(omega, dtype=float), np.asarray(t, dtype=float), np.asarray(phi, dtype=float)
    )
    tau = omega * t
    small = np.abs(tau) < series_cut
    out = np.empty(tau.shape)

    ts, ps, ws = tau[small], phi[small], t[small]
    acc = np.zeros(ts.shape)
    power = np.ones(ts.shape)
    for j in range(n, n + 40):
        acc += power * trig(ps + j * np.pi / 2) / math.factorial(j)
        power = power * ts
    out[small] = ws**n * acc

    big = ~small
    tb, pb, wb = tau[big], phi[big], omega[big]
    head = np.zeros(tb.shape)
    power = np.ones(tb.shape)
    for j in range(n):
        head += power * trig(pb + j * np.pi / 2) / math.factorial(j)
        power = power * tb
    out[big] = (trig(tb + pb) - head) / wb**n
    return out if out.ndim else float(out)


def _F_u(n, omega, t, phi):
    sgn = (-1) ** ((n + 1) // 2)
    return sgn * modified_trig("sin" if n % 2 == 0 else "cos", n, omega, t, phi)


def _F_g(n, omega, t, phi):
    sgn = (-1) ** ((n + 2) // 2)
    return sgn * modified_trig("cos" if n % 2 == 0 else "sin", n, omega, t, phi)


def bound_constant(n: int) -> float:
    """(n+2)/(n+1)! + 1 + e."""
    return (n + 2) / math.factorial(n + 1) + 1 + math.e


@dataclass(frozen=True)
class IteratedFieldIntegral:
    """n-fold repeated integral I_n(E, t) = int_0^t dx1 ... int_0^{x_{n-1}} dx_n E(x_n).

    The lower limit is ``t0`` (default 0).
    """

    field: object
    order: int
    t0: float = 0.0

    def __call__(self, t):
        return self.time_domain(t)

    def time_domain(self, t, panel_order: int = 16):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        hi = float(t.max())
        if hi <= self.t0:
            return np.zeros_like(t)
        breaks = np.unique(np.concatenate([[self.t0], t[t > self.t0]]))
        bw = float(self.field.bandwidth)
        width = min(1.0 / bw if bw > 0 else np.inf, (hi - self.t0) / 8)
        grid = PanelGrid(breaks, width, panel_order)
        J = np.asarray(self.field.value(grid.nodes), dtype=float)
        for _ in range(self.order):
            J = grid.cumulative(J)
        vals = grid.at_breaks(J)
        out = np.zeros_like(t)
        mask = t > self.t0
        out[mask] = vals[np.searchsorted(breaks, t[mask])]
        return out

    def spectral(self, t, panel_order: int = 16):
        """Frequency-domain evaluation through the modified trigonometric functions.

        Uses E(x) = (1/pi) int_0^inf [S_u sin(Omega(x - t_ref)) + S_g cos(Omega(x - t_ref))] dOmega,
        i.e. the per-frequency phase is -Omega t_ref with the time origin moved to ``t0``.
        """
        from .fields import symmetry_split

        f = self.field
        t = np.atleast_1d(np.asarray(t, dtype=float)) - self.t0
        top = f.bandwidth + 30.0 / f.sigma
        reach = float(np.max(np.abs(t))) + abs(f.t_ref - self.t0) + 1.0
        grid = PanelGrid([0.0, top], min(1.0 / reach, 0.5 / f.sigma), panel_order)
        w = grid.nodes
        s_u, s_g = symmetry_split(f, w)
        phi = -w * (f.t_ref - self.t0)
        n = self.order
        out = np.empty(t.shape)
        for k, tk in enumerate(t):
            integrand = s_u * _F_u(n, w, tk, phi) - s_g * _F_g(n, w, tk, phi)
            out[k] = grid.integral(integrand) / np.pi
        return out

    def bound(self, t):
        A = abs(self.field.amplitude)
        return A * (np.asarray(t, dtype=float) - self.t0) ** self.order * bound_constant(self.order)


def iterated_field_integral(fld, n: int, t, method: str = "time", t0: float = 0.0):
    """Evaluate I_n(E, t) by nested quadrature (``"time"``) or via the spectrum (``"spectral"``)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    ifi = IteratedFieldIntegral(fld, n, t0)
    if method == "time":
        return ifi.time_domain(t)
    if method == "spectral":
        return ifi.spectral(t)
    raise ValueError(f"unknown method {method!r}")


@dataclass(frozen=True)
class BoundReport:
    order: int
    max_ratio: float
    t_at_max: float
    ratios: np.ndarray


def check_iterated_bound(fld, n: int, t_grid, t0: float = 0.0) -> BoundReport:
    """Compare |I_n(E,t)| with A t^n [(n+2)/(n+1)! + 1 + e] on ``t_grid`` (t > t0).

    Raises :class:`BoundViolated` if the ratio reaches 1 anywhere.
    """
    t = np.asarray(t_grid, dtype=float)
    t = t[t > t0]
    ifi = IteratedFieldIntegral(fld, n, t0)
    ratios = np.abs(ifi.time_domain(t)) / ifi.bound(t)
    k = int(np.argmax(ratios))
    rep = BoundReport(n, float(ratios[k]), float(t[k]), ratios)
    if rep.max_ratio >= 1.0:
        raise BoundViolated(f"|I_{n}| / bound = {rep.max_ratio:.6g} at t = {rep.t_at_max:.6g}")
    return rep

"""Slowly varying fields: dipolar detuning, constant-field Rabi dynamics and
the quasi-static first- and second-order transfer amplitudes.

Conventions for a pair (i, f): d_eps = eps_f - eps_i, d_mu = mu_ff - mu_ii,
mu = mu_fi. The exact constant-field two-level population is

    P_f = sin^2(theta sqrt(1 + d^2)) / (1 + d^2),
    d = (d_eps - d_mu E) / (2 mu E),   theta = mu E t,

so the first inversion on resonance happens at t = pi / (2 mu A0).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import IntermediateResonance, UncoupledPair, ZeroField
from .fields import Constant, Lobe, Sine, VectorPotentialPulse
from .system import (
    COUPLING_THRESHOLD,
    NLevelSystem,
    Regime,
    TransferPath,
    classify_regime,
    is_dipole_harmonic,
    make_path,
)

#: below this |denominator| the removable singularities use their limits.
RESONANCE_EPS = 1e-10


@dataclass(frozen=True)
class ReducedParams:
    d: float
    theta: float
    A0: float
    mu_ratio: float
    E: float
    t: float


def _pair(sys: NLevelSystem, i: int, f: int):
    mu = float(sys.dipole[f, i])
    if abs(mu) < COUPLING_THRESHOLD:
        raise UncoupledPair(f"levels {i} and {f} are not coupled")
    return sys.delta_eps(f, i), sys.delta_mu(f, i), mu


def _detuning(de, dm, mu, E):
    E = np.asarray(E, dtype=float)
    if np.any(E == 0):
        raise ZeroField("the dipolar detuning is undefined at E = 0")
    return (de - dm * E) / (2 * mu * E)


def reduced_params(sys: NLevelSystem, i: int, f: int, E: float, t: float) -> ReducedParams:
    """Dipolar detuning ``d`` and generalized time ``theta = mu_fi E t``."""
    de, dm, mu = _pair(sys, i, f)
    d = float(_detuning(de, dm, mu, E))
    A0 = de / dm if abs(dm) >= COUPLING_THRESHOLD else math.inf
    ratio = mu / dm if abs(dm) >= COUPLING_THRESHOLD else math.inf
    return ReducedParams(d, mu * E * t, A0, ratio, float(E), float(t))


def rabi_population(d, theta):
    """sin^2(theta sqrt(1+d^2)) / (1+d^2)."""
    d = np.asarray(d, dtype=float)
    q = 1.0 + d * d
    return np.sin(np.asarray(theta) * np.sqrt(q)) ** 2 / q


def pf_max(sys: NLevelSystem, i: int, f: int, E):
    """Largest final population over time for a constant field E: 1 / (1 + d(E)^2)."""
    de, dm, mu = _pair(sys, i, f)
    d = _detuning(de, dm, mu, E)
    return 1.0 / (1.0 + d * d)


def pf_max_inverted(mu: float, dmu: float) -> float:
    """P_f^max at E = -A0: mu^2 / (mu^2 + d_mu^2)."""
    return mu * mu / (mu * mu + dmu * dmu)


def pf_max_strong_field(mu: float, dmu: float) -> float:
    """P_f^max for |E| -> infinity (either sign): mu^2 / (mu^2 + d_mu^2 / 4)."""
    return mu * mu / (mu * mu + dmu * dmu / 4)


def pf_max_table(sys: NLevelSystem, i: int, f: int, e_over_a0) -> np.ndarray:
    """Rows ``(E/A0, d, pf_max_analytic)`` of the analytic maximal-population curve."""
    de, dm, mu = _pair(sys, i, f)
    x = np.asarray(e_over_a0, dtype=float)
    E = x * de / dm
    d = _detuning(de, dm, mu, E)
    return np.column_stack([x, d, 1.0 / (1.0 + d * d)])


def _warn_unless_slow(sys, levels, fld):
    try:
        rc = classify_regime(sys, make_path(sys, levels), fld)
    except Exception:  # classification is advisory only
        return
    if rc.kind is not Regime.SLOW:
        warnings.warn(f"field is not slowly varying for this path ({rc.kind.value})", stacklevel=3)


def m1_slow(sys: NLevelSystem, fld, i: int, l1: int, t, check_regime: bool = True):
    """Quasi-static first-order amplitude mu E(t) [exp(i g t) - 1] / g, g = d_eps - d_mu E(t).

    Exact for constant fields. Uses i mu E t when |g| < 1e-10.
    """
    if check_regime:
        _warn_unless_slow(sys, [i, l1], fld)
    de, dm, mu = sys.delta_eps(l1, i), sys.delta_mu(l1, i), float(sys.dipole[l1, i])
    t = np.asarray(t, dtype=float)
    E = np.asarray(fld.value(t), dtype=float)
    g = de - dm * E
    res = np.abs(g) < RESONANCE_EPS
    gs = np.where(res, 1.0, g)
    out = np.where(res, 1j * mu * E * t, mu * E * np.expm1(1j * gs * t) / gs)
    return out if out.ndim else complex(out)


def _ratio_or_limit(g, t):
    """(exp(i g t) - 1) / g with its limit i t at g = 0."""
    res = np.abs(g) < RESONANCE_EPS
    gs = np.where(res, 1.0, g)
    return np.where(res, 1j * t, np.expm1(1j * gs * t) / gs)


def i2_slow(sys: NLevelSystem, fld, path: TransferPath | tuple, t, intermediate_tol: float = RESONANCE_EPS):
    """Quasi-static second-order amplitude along i -> b -> f.

    Returns mu_fb mu_bi E^2 [exp(i g_fi t) - 1] / (g_fi g_bi), the resonant part of the
    constant-field I^(2) (the bounded term oscillating with g_fb is dropped). At overall
    resonance it grows as i mu_fb mu_bi E^2 t / g_bi. For dipole-harmonic paths at the
    common resonance both steps are resonant and the value is -mu_fb mu_bi E^2 t^2 / 2.

    Raises
    ------
    IntermediateResonance
        If |g_bi| < ``intermediate_tol`` somewhere and the path is not dipole-harmonic.
    """
    if not isinstance(path, TransferPath):
        path = make_path(sys, path)
    if path.steps != 2:
        raise ValueError("i2_slow needs a two-step path")
    i, b, f = path.levels
    t = np.asarray(t, dtype=float)
    E = np.asarray(fld.value(t), dtype=float)
    mu2 = float(sys.dipole[f, b] * sys.dipole[b, i])
    g_bi = sys.delta_eps(b, i) - sys.delta_mu(b, i) * E
    g_fi = sys.delta_eps(f, i) - sys.delta_mu(f, i) * E
    inter = np.abs(g_bi) < intermediate_tol
    harmonic = is_dipole_harmonic(path)
    if np.any(inter) and not harmonic:
        raise IntermediateResonance(
            f"step {i}->{b} is resonant at E = {float(np.atleast_1d(E)[np.argmax(inter)]):.6g}; "
            "use the stepwise (nested) evaluation"
        )
    gb = np.where(inter, 1.0, g_bi)
    out = np.where(inter, -0.5 * mu2 * E**2 * t**2, mu2 * E**2 * _ratio_or_limit(g_fi, t) / gb)
    return out if out.ndim else complex(out)


def pop3ls_at_resonance(sys: NLevelSystem, path: TransferPath | tuple, t):
    """Final-level population at overall resonance: mu_fb^2 mu_bi^2 A0^4 t^2 / g_bi(A0)^2."""
    if not isinstance(path, TransferPath):
        path = make_path(sys, path)
    i, b, f = path.levels
    A0 = sys.delta_eps(f, i) / sys.delta_mu(f, i)
    g_bi = sys.delta_eps(b, i) - sys.delta_mu(b, i) * A0
    if abs(g_bi) < RESONANCE_EPS:
        raise IntermediateResonance("intermediate step is resonant at A0")
    t = np.asarray(t, dtype=float)
    return (sys.dipole[f, b] * sys.dipole[b, i]) ** 2 * A0**4 * t**2 / g_bi**2


# --- validity checks ---------------------------------------------------------


def characteristic_frequency(fld) -> float:
    """Omega0 of the slow-variation analysis: carrier (sine, pulse), 1/sigma (lobe), 0 (constant)."""
    if isinstance(fld, Constant):
        return 0.0
    if isinstance(fld, Sine):
        return fld.omega
    if isinstance(fld, VectorPotentialPulse):
        return fld.omega0
    if isinstance(fld, Lobe):
        return 1.0 / fld.sigma
    return float(fld.carrier_frequency)


def _default_window(fld):
    if isinstance(fld, Sine):
        return 0.0, 2 * math.pi / fld.omega
    if isinstance(fld, (Lobe, VectorPotentialPulse)):
        return fld.t_ref - 4 * fld.sigma, fld.t_ref + 4 * fld.sigma
    return 0.0, 1.0


def _verdict(x: float, factor: float) -> Regime:
    if x * factor <= 1.0:
        return Regime.SLOW
    if x >= factor:
        return Regime.FAST
    return Regime.INTERMEDIATE


@dataclass(frozen=True)
class SlowVariationReport:
    T: float
    omega0: float
    t_omega0: float
    derivative_ratio: float
    kind: Regime
    derivative_ok: bool
    majorant_valid: bool

    @property
    def passed(self) -> bool:
        return self.kind is Regime.SLOW


def slow_variation_check(fld, T: float, window=None, factor: float = 10.0, n_samples: int = 4001,
                         tail_cut: float = 1e-3) -> SlowVariationReport:
    """Quantify T << 1/Omega0 and T << |E/E'| for an interval of length ``T``.

    ``kind`` classifies T*Omega0 (slow at <= 1/factor, fast-varying at >= factor,
    intermediate between). The derivative ratio max T|E'/E| is taken over
    ``window`` excluding samples with |E| < ``tail_cut`` * max|E|.
    """
    w0 = characteristic_frequency(fld)
    lo, hi = window if window is not None else _default_window(fld)
    t = np.linspace(lo, hi, n_samples)
    E = np.asarray(fld.value(t), dtype=float)
    dE = np.asarray(fld.derivative(t), dtype=float)
    emax = float(np.max(np.abs(E)))
    keep = np.abs(E) >= tail_cut * emax if emax > 0 else np.zeros_like(E, dtype=bool)
    dr = float(T * np.max(np.abs(dE[keep] / E[keep]))) if np.any(keep) else 0.0
    x = T * w0
    return SlowVariationReport(
        T=T,
        omega0=w0,
        t_omega0=x,
        derivative_ratio=dr,
        kind=_verdict(x, factor),
        derivative_ok=dr * factor <= 1.0,
        majorant_valid=x < 1.0,
    )


@dataclass(frozen=True)
class SignDependenceReport:
    mu_ratio: float
    omega_ratio: float
    kind: str


def sign_dependence_condition(sys: NLevelSystem, i: int, f: int, fld, factor: float = 10.0) -> SignDependenceReport:
    """Classify sign dependence from r = |mu_fi/d_mu_fi| and q = Omega0 pi |d_mu| / |mu d_eps|.

    ``"sign-selective"`` needs r and q both at most 1/factor, ``"sign-blind"``
    holds for r >= factor, anything else is ``"marginal"``.
    """
    de, dm, mu = _pair(sys, i, f)
    r = abs(mu / dm) if dm != 0 else math.inf
    w0 = characteristic_frequency(fld)
    q = w0 * math.pi * abs(dm) / abs(mu * de) if de != 0 else math.inf
    if r >= factor:
        kind = "sign-blind"
    elif r * factor <= 1 and q * factor <= 1:
        kind = "sign-selective"
    else:
        kind = "marginal"
    return SignDependenceReport(r, q, kind)

"""Field models E(t): analytic values, derivatives, running integrals and spectra.

Four shapes are supported:

``Constant``
    E(t) = E0.
``Sine``
    E(t) = A sin(omega t + phase).
``Lobe``
    E(t) = A exp(-(t - t_center)^2 / sigma^2), a single half-cycle-like lobe.
``VectorPotentialPulse``
    Field of a Gaussian vector potential a(t) = -(A/Omega0) m(t) sin(Omega0 u + phi),
    u = t - t_max, m = exp(-u^2/sigma^2), sigma = alpha pi sqrt(ln 2) / Omega0.
    E = -da/dt (speed of light absorbed into A) splits into a principal term
    A m cos(Omega0 u + phi) and a switch term -A m 2u/(Omega0 sigma^2) sin(Omega0 u + phi).
    ``phi`` is the carrier phase at the envelope maximum.

Spectra follow S(Omega) = int E(t) exp(-i Omega (t - t_ref)) dt with the time origin
``t_ref`` at the envelope centre, so that real fields obey S(-Omega) = conj(S(Omega)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import optimize, special

SQRT_PI = math.sqrt(math.pi)
SQRT_LN2 = math.sqrt(math.log(2.0))


class _FieldBase:
    kind: str = ""

    def __call__(self, t):
        return self.value(t)

    def with_amplitude(self, A: float):
        return replace(self, **{self._amp_key: float(A)})

    def negated(self):
        return replace(self, **{self._amp_key: -getattr(self, self._amp_key)})

    @property
    def amplitude(self) -> float:
        return getattr(self, self._amp_key)

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        for k in self._param_keys:
            d[k] = float(getattr(self, k))
        return d


@dataclass(frozen=True)
class Constant(_FieldBase):
    E0: float
    kind = "constant"
    _amp_key = "E0"
    _param_keys = ("E0",)

    def value(self, t):
        return np.full_like(np.asarray(t, dtype=float), self.E0)

    def derivative(self, t, order: int = 1):
        return np.zeros_like(np.asarray(t, dtype=float))

    def integral(self, t0, t1):
        return self.E0 * (np.asarray(t1, dtype=float) - t0)

    def peak_abs(self) -> float:
        return abs(self.E0)

    @property
    def bandwidth(self) -> float:
        return 0.0

    @property
    def carrier_frequency(self) -> float:
        return 0.0

    def mirrored(self, T: float):
        return self


@dataclass(frozen=True)
class Sine(_FieldBase):
    A: float
    omega: float
    phase: float = 0.0
    kind = "sine"
    _amp_key = "A"
    _param_keys = ("A", "omega", "phase")

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError("Sine needs omega > 0")

    def value(self, t):
        return self.A * np.sin(self.omega * np.asarray(t, dtype=float) + self.phase)

    def derivative(self, t, order: int = 1):
        x = self.omega * np.asarray(t, dtype=float) + self.phase
        w = self.omega
        return {
            1: self.A * w * np.cos(x),
            2: -self.A * w**2 * np.sin(x),
            3: -self.A * w**3 * np.cos(x),
        }[order]

    def integral(self, t0, t1):
        t1 = np.asarray(t1, dtype=float)
        return -self.A / self.omega * (
            np.cos(self.omega * t1 + self.phase) - np.cos(self.omega * t0 + self.phase)
        )

    def peak_abs(self) -> float:
        return abs(self.A)

    @property
    def bandwidth(self) -> float:
        return self.omega

    @property
    def carrier_frequency(self) -> float:
        return self.omega

    def mirrored(self, T: float):
        # A sin(w(T - t) + p) = -A sin(w t - w T - p)
        return Sine(-self.A, self.omega, -self.omega * T - self.phase)


@dataclass(frozen=True)
class Lobe(_FieldBase):
    A: float
    sigma: float
    t_center: float
    kind = "lobe"
    _amp_key = "A"
    _param_keys = ("A", "sigma", "t_center")

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("Lobe needs sigma > 0")

    def value(self, t):
        u = np.asarray(t, dtype=float) - self.t_center
        return self.A * np.exp(-(u**2) / self.sigma**2)

    def derivative(self, t, order: int = 1):
        u = np.asarray(t, dtype=float) - self.t_center
        s2 = self.sigma**2
        p = -2.0 * u / s2
        dp = -2.0 / s2
        g = self.A * np.exp(-(u**2) / s2)
        return {1: p * g, 2: (dp + p**2) * g, 3: (3 * p * dp + p**3) * g}[order]

    def integral(self, t0, t1):
        t1 = np.asarray(t1, dtype=float)
        s = self.sigma
        return 0.5 * self.A * s * SQRT_PI * (
            special.erf((t1 - self.t_center) / s) - special.erf((t0 - self.t_center) / s)
        )

    def spectrum(self, omega):
        """Fourier transform about ``t_center``."""
        w = np.asarray(omega, dtype=float)
        return (self.A * self.sigma * SQRT_PI * np.exp(-(self.sigma**2) * w**2 / 4)).astype(complex)

    def peak_abs(self) -> float:
        return abs(self.A)

    @property
    def bandwidth(self) -> float:
        return 6.0 / self.sigma

    @property
    def carrier_frequency(self) -> float:
        # rms width of the power spectrum; the lobe has no carrier
        return 1.0 / self.sigma

    @property
    def t_ref(self) -> float:
        return self.t_center

    def mirrored(self, T: float):
        return Lobe(self.A, self.sigma, T - self.t_center)


@dataclass(frozen=True)
class VectorPotentialPulse(_FieldBase):
    A: float
    omega0: float
    phi: float
    alpha: float
    t_max: float
    sigma: float = field(default=float("nan"))
    kind = "vp_pulse"
    _amp_key = "A"
    _param_keys = ("A", "omega0", "phi", "alpha", "t_max")

    def __post_init__(self):
        if not (self.omega0 > 0 and self.alpha > 0):
            raise ValueError("vp_pulse needs omega0 > 0 and alpha > 0")
        s = self.alpha * math.pi * SQRT_LN2 / self.omega0
        if math.isnan(self.sigma):
            object.__setattr__(self, "sigma", s)
        elif abs(self.sigma - s) > 1e-12 * s:
            raise ValueError(f"sigma={self.sigma} inconsistent with alpha, omega0 (expected {s})")

    @classmethod
    def centered(cls, A, omega0, alpha, phi=0.0, n_sigma=6.0):
        """Pulse placed at ``t_max = n_sigma * sigma`` so that it starts ~0 at t=0."""
        s = alpha * math.pi * SQRT_LN2 / omega0
        return cls(A, omega0, phi, alpha, n_sigma * s)

    def _h(self, t):
        u = np.asarray(t, dtype=float) - self.t_max
        s2 = self.sigma**2
        h = np.exp(-(u**2) / s2 + 1j * (self.omega0 * u + self.phi))
        p = -2.0 * u / s2 + 1j * self.omega0
        return h, p, -2.0 / s2

    def vector_potential(self, t):
        h, _, _ = self._h(t)
        return -self.A / self.omega0 * h.imag

    def value(self, t):
        h, p, _ = self._h(t)
        return self.A / self.omega0 * (p * h).imag

    def principal(self, t):
        u = np.asarray(t, dtype=float) - self.t_max
        return self.A * np.exp(-(u**2) / self.sigma**2) * np.cos(self.omega0 * u + self.phi)

    def switch(self, t):
        u = np.asarray(t, dtype=float) - self.t_max
        return (
            -2.0 * self.A * u / (self.omega0 * self.sigma**2)
            * np.exp(-(u**2) / self.sigma**2)
            * np.sin(self.omega0 * u + self.phi)
        )

    def derivative(self, t, order: int = 1):
        h, p, dp = self._h(t)
        poly = {
            1: dp + p**2,
            2: 3 * p * dp + p**3,
            3: 3 * dp**2 + 6 * p**2 * dp + p**4,
        }[order]
        return self.A / self.omega0 * (poly * h).imag

    def integral(self, t0, t1):
        return self.vector_potential(t0) - self.vector_potential(np.asarray(t1, dtype=float))

    def spectrum(self, omega):
        sp, ss = analytic_spectrum(self, omega)
        return sp + ss

    def peak_abs(self) -> float:
        u = np.linspace(-4 * self.sigma, 4 * self.sigma, 4001)
        return float(np.max(np.abs(self.value(u + self.t_max))))

    @property
    def bandwidth(self) -> float:
        return self.omega0 + 6.0 / self.sigma

    @property
    def carrier_frequency(self) -> float:
        return self.omega0

    @property
    def t_ref(self) -> float:
        return self.t_max

    def mirrored(self, T: float):
        return VectorPotentialPulse(self.A, self.omega0, -self.phi, self.alpha, T - self.t_max)

    def support(self, n_sigma: float = 10.0) -> tuple[float, float]:
        return self.t_max - n_sigma * self.sigma, self.t_max + n_sigma * self.sigma


FieldModel = Constant | Sine | Lobe | VectorPotentialPulse

FIELD_KINDS = {
    "constant": Constant,
    "sine": Sine,
    "lobe": Lobe,
    "vp_pulse": VectorPotentialPulse,
}


def field_from_dict(d: dict) -> FieldModel:
    d = dict(d)
    kind = d.pop("kind")
    return FIELD_KINDS[kind](**d)


def eval_field(f: FieldModel, t):
    return f.value(t)


def field_integral(f: FieldModel, t0: float, t1):
    """Running integral int_{t0}^{t1} E dt (closed forms for every variant)."""
    return f.integral(t0, t1)


# --- spectra of the vector-potential pulse -----------------------------------


class SpectrumComponents(NamedTuple):
    p1: np.ndarray
    p2: np.ndarray
    s1: np.ndarray
    s2: np.ndarray


def spectrum_components(f: VectorPotentialPulse, omega) -> SpectrumComponents:
    """Even/odd shape functions of the principal and switch spectra."""
    w = np.asarray(omega, dtype=float)
    q = f.sigma**2 / 4
    ep = np.exp(-q * (w - f.omega0) ** 2)
    em = np.exp(-q * (w + f.omega0) ** 2)
    return SpectrumComponents(
        p1=ep + em,
        p2=ep - em,
        s1=(w - f.omega0) * ep - (w + f.omega0) * em,
        s2=(w - f.omega0) * ep + (w + f.omega0) * em,
    )


def analytic_spectrum(f: VectorPotentialPulse, omega):
    """Closed-form spectra ``(S_P, S_S)`` of the principal and switch terms.

    S_P = A sigma sqrt(pi)/2 [p1 cos(phi) + i p2 sin(phi)]
    S_S = A sigma sqrt(pi)/(2 Omega0) [s1 cos(phi) + i s2 sin(phi)]
    """
    c = spectrum_components(f, omega)
    pref = f.A * f.sigma * SQRT_PI / 2
    cph, sph = math.cos(f.phi), math.sin(f.phi)
    sp = pref * (c.p1 * cph + 1j * c.p2 * sph)
    ss = pref / f.omega0 * (c.s1 * cph + 1j * c.s2 * sph)
    return sp, ss


def averaged_spectrum(f: VectorPotentialPulse, omega):
    """Positive-frequency spectrum with even and odd shapes averaged (mirror Gaussian dropped).

    Returns the real weight w(Omega) such that
    E(t) ~ (1/pi) int_0^inf w(Omega) cos(Omega u + phi) dOmega.
    """
    c = spectrum_components(f, omega)
    p_av = 0.5 * (c.p1 + c.p2)
    s_av = 0.5 * (c.s1 + c.s2)
    return f.A * f.sigma * SQRT_PI / 2 * (p_av + s_av / f.omega0)


def symmetry_split(f, omega):
    """(S_u, S_g) with E(t) = (1/pi) int_0^inf [S_u sin(Omega u) + S_g cos(Omega u)] dOmega."""
    s = f.spectrum(omega)
    return -s.imag, s.real


def numeric_spectrum(f, omega, n_sigma: float = 14.0, points_per_cycle: int = 24):
    """Fourier integral of E(t) by dense trapezoid sums (independent of the closed forms).

    Accurate to near machine precision for the Gaussian-enveloped pulses, whose
    samples decay to zero at both ends of the window.
    """
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    wmax = max(float(np.max(np.abs(w))), f.bandwidth)
    t_ref = f.t_ref
    half = n_sigma * f.sigma
    n = int(math.ceil(2 * half * wmax * points_per_cycle / (2 * math.pi))) + 1
    u = np.linspace(-half, half, n)
    dt = u[1] - u[0]
    e = f.value(u + t_ref)
    out = np.empty(w.shape, dtype=complex)
    for k in range(0, w.size, 256):
        ph = np.exp(-1j * np.outer(w[k : k + 256], u))
        out[k : k + 256] = ph @ e * dt
    return out


@dataclass(frozen=True)
class Landmarks:
    omega_c: float
    omega_p: float
    omega_p_approx: float
    omega_s_peaks: tuple[float, float]
    omega_peak_closed_form: float
    approx_valid: bool
    validity_ratio: float


def spectral_landmarks(f: VectorPotentialPulse, validity_threshold: float = 100.0) -> Landmarks:
    """Cutoff, peak and switch-term extrema of the pulse spectrum.

    ``omega_p``/``omega_p_approx`` are the two-line peak estimate; the
    approximation is flagged valid when ``6 alpha^4 / Omega0^2`` exceeds
    ``validity_threshold``. ``omega_peak_closed_form`` is the maximiser of
    Omega exp(-sigma^2 (Omega - Omega0)^2 / 4), i.e. the positive-frequency
    lobe of the total spectrum with the mirror Gaussian neglected.
    """
    w0, s, a = f.omega0, f.sigma, f.alpha
    ln2 = math.log(2.0)
    omega_c = w0 * (1 + math.sqrt(2) / (a * math.pi * SQRT_LN2))
    omega_p = w0 * (1 + s / 2 - math.sqrt(s**2 / 4 + 2 / (s * w0) ** 2))
    omega_p_approx = w0 * (1 - 4 * w0 / (a**3 * math.pi**3 * ln2**1.5))
    peaks = (w0 - math.sqrt(2) / s, w0 + math.sqrt(2) / s)
    closed = w0 / 2 + math.sqrt(w0**2 / 4 + 2 / s**2)
    ratio = 6 * a**4 / w0**2
    return Landmarks(omega_c, omega_p, omega_p_approx, peaks, closed, ratio > validity_threshold, ratio)


def _edges(mag_fn, grid, thr):
    mag = mag_fn(grid)
    above = np.nonzero(mag >= thr)[0]
    lo_i, hi_i = above[0], above[-1]

    def g(w):
        return float(mag_fn(np.array([w]))[0] - thr)

    lo = grid[lo_i]
    if lo_i > 0:
        lo = optimize.brentq(g, grid[lo_i - 1], grid[lo_i], xtol=1e-14)
    hi = grid[hi_i]
    if hi_i < grid.size - 1:
        hi = optimize.brentq(g, grid[hi_i], grid[hi_i + 1], xtol=1e-14)
    return float(lo), float(hi)


def omega_bounds(f: FieldModel, threshold: float = 0.01) -> tuple[float, float]:
    """Lowest and highest angular frequency where |S| >= threshold * max|S| (Omega >= 0)."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    if isinstance(f, Constant):
        return 0.0, 0.0
    if isinstance(f, Sine):
        return f.omega, f.omega
    top = f.bandwidth + 20.0 / f.sigma
    grid = np.linspace(0.0, top, 20001)

    def mag(w):
        return np.abs(f.spectrum(w))

    thr = threshold * float(np.max(mag(grid)))
    return _edges(mag, grid, thr)


def characteristic_frequency(f: FieldModel) -> float:
    return f.carrier_frequency

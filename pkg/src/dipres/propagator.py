"""Numerical solution of i dc/dt = H(t) c for a driven N-level system.

The default integrator is the fourth-order commutator-free Magnus scheme

    U(t+h, t) = exp(-i h (b H_2 + a H_1)) @ exp(-i h (a H_2 + b H_1))  (right factor first),
    a = 1/4 - sqrt(3)/6,  b = 1/4 + sqrt(3)/6,

with H_1, H_2 the Hamiltonian at the two Gauss-Legendre nodes of the step. Each
factor is the exponential of a real symmetric matrix, taken through its
eigendecomposition, so every step is unitary to rounding and exact when the
field is constant. ``"midpoint"`` (one exponential at the step midpoint) and a
non-unitary ``"rk4"`` are available for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import NonFiniteField, StepUnderflow
from .system import NLevelSystem

_SQ3_6 = math.sqrt(3.0) / 6.0
_GAUSS = (0.5 - _SQ3_6, 0.5 + _SQ3_6)
_CF_A, _CF_B = 0.25 - _SQ3_6, 0.25 + _SQ3_6


@dataclass(frozen=True)
class WaveState:
    amplitudes: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        c = np.array(self.amplitudes, dtype=complex)
        if c.ndim != 1:
            raise ValueError("amplitudes must be a vector")
        if abs(np.vdot(c, c).real - 1.0) > 1e-10:
            raise ValueError("initial state must be normalized to 1e-10")
        c.setflags(write=False)
        object.__setattr__(self, "amplitudes", c)

    @classmethod
    def basis(cls, n: int, k: int, t: float = 0.0) -> "WaveState":
        c = np.zeros(n, dtype=complex)
        c[k] = 1.0
        return cls(c, t)


@dataclass(frozen=True)
class PropagationOptions:
    """Integrator settings.

    Attributes
    ----------
    method : {"cfm4", "midpoint", "rk4"}
    step_tol : float
        Allowed field change per step relative to the peak |E| on the window;
        steps also satisfy h * bandwidth <= 10 * step_tol.
    max_hnorm : float
        Upper bound on h * ||H|| per step.
    n_out : int
        Size of the uniform output grid (ignored when ``t_eval`` is given).
    t_eval : array_like or None
        Explicit increasing output times within [t0, t_end].
    max_steps : int
        Hard budget on internal steps.
    """

    method: Literal["cfm4", "midpoint", "rk4"] = "cfm4"
    step_tol: float = 1e-3
    max_hnorm: float = 0.5
    n_out: int = 2000
    t_eval: np.ndarray | None = None
    max_steps: int = 20_000_000


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    amplitudes: np.ndarray
    n_steps: int = 0
    method: str = "cfm4"
    meta: dict = field(default_factory=dict)

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norm_error(self) -> np.ndarray:
        return np.abs(self.populations.sum(axis=1) - 1.0)

    @property
    def final(self) -> np.ndarray:
        return self.amplitudes[-1]

    def csv_header(self) -> list[str]:
        n = self.amplitudes.shape[1]
        cols = ["t"] + [f"P_{k}" for k in range(n)]
        for k in range(n):
            cols += [f"Re(c_{k})", f"Im(c_{k})"]
        return cols + ["norm_error"]

    def csv_rows(self) -> np.ndarray:
        c = self.amplitudes
        ri = np.empty((c.shape[0], 2 * c.shape[1]))
        ri[:, 0::2] = c.real
        ri[:, 1::2] = c.imag
        return np.column_stack([self.times, self.populations, ri, self.norm_error])


def _hnorm_parts(sys: NLevelSystem) -> tuple[float, float]:
    """Spreads (half widths) of the energy and dipole spectra.

    Adding multiples of the identity to H only changes a global phase, so the
    step criterion uses ||H - c I|| <= eps_half + |E| mu_half.
    """
    eps = sys.energies
    ev = np.linalg.eigvalsh(sys.dipole)
    return 0.5 * float(eps.max() - eps.min()), 0.5 * float(ev[-1] - ev[0])


def _step_plan(sys, fld, t_out, opts: PropagationOptions):
    """Number of equal substeps for each output interval."""
    span = t_out[-1] - t_out[0]
    bw = max(float(fld.bandwidth), 1e-300)
    probe_dt = min(0.05 / bw, span / 64) if bw > 1e-300 else span / 64
    n_probe = np.maximum(2, np.ceil(np.diff(t_out) / probe_dt).astype(np.int64) + 1)
    if n_probe.sum() > 50_000_000:
        raise StepUnderflow("field too fast for the requested window")
    eps_half, mu_half = _hnorm_parts(sys)
    # one probe grid per interval, concatenated
    idx = np.repeat(np.arange(t_out.size - 1), n_probe)
    frac = np.concatenate([np.linspace(0.0, 1.0, k) for k in n_probe]) if n_probe.size < 5000 else None
    if frac is None:
        starts = np.cumsum(n_probe) - n_probe
        pos = np.arange(n_probe.sum()) - np.repeat(starts, n_probe)
        frac = pos / np.repeat(n_probe - 1, n_probe)
    tp = t_out[idx] + frac * (t_out[idx + 1] - t_out[idx])
    E = np.asarray(fld.value(tp), dtype=float)
    dE = np.asarray(fld.derivative(tp), dtype=float)
    if not (np.all(np.isfinite(E)) and np.all(np.isfinite(dE))):
        raise NonFiniteField("field or its derivative is not finite on the window")
    emax = float(np.max(np.abs(E))) if E.size else 0.0
    seg_w = np.diff(t_out)
    n_steps = np.ones(t_out.size - 1, dtype=np.int64)
    # total variation of E per interval (trapezoid on |E'|), plus a margin for probe aliasing
    absd = np.abs(dE)
    dt = np.diff(tp)
    same = idx[1:] == idx[:-1]
    tv = np.bincount(idx[1:][same], weights=(0.5 * (absd[1:] + absd[:-1]) * dt)[same], minlength=seg_w.size)
    if emax > 0:
        n_steps = np.maximum(n_steps, np.ceil(1.1 * tv / (opts.step_tol * emax)).astype(np.int64))
    emax_seg = np.zeros(seg_w.size)
    np.maximum.at(emax_seg, idx, np.abs(E))
    # |E| can exceed probe samples by at most half a probe step times max|E'|
    dmax_seg = np.zeros(seg_w.size)
    np.maximum.at(dmax_seg, idx, absd)
    hn = eps_half + (emax_seg + 0.5 * probe_dt * dmax_seg) * mu_half
    n_steps = np.maximum(n_steps, np.ceil(seg_w * hn / opts.max_hnorm).astype(np.int64))
    # the field criterion alone lets tail steps grow until the carrier phase is undersampled
    if bw > 1e-300:
        n_steps = np.maximum(n_steps, np.ceil(seg_w * bw / (10 * opts.step_tol)).astype(np.int64))
    if n_steps.sum() > opts.max_steps:
        raise StepUnderflow(f"{int(n_steps.sum())} steps exceed the budget of {opts.max_steps}")
    h = seg_w / n_steps
    if np.any(h < 1e-16 * span):
        raise StepUnderflow("step size fell below 1e-16 of the propagation span")
    return n_steps


def _expm_sym(Hs: np.ndarray, h: np.ndarray) -> np.ndarray:
    """exp(-i h_k H_k) for a stack of real symmetric matrices."""
    w, V = np.linalg.eigh(Hs)
    ph = np.exp(-1j * h[:, None] * w)
    return (V * ph[:, None, :]) @ np.swapaxes(V, -1, -2)


def _step_unitaries(sys, fld, ts, h, method):
    if method == "cfm4":
        E1 = fld.value(ts + _GAUSS[0] * h)
        E2 = fld.value(ts + _GAUSS[1] * h)
        if not (np.all(np.isfinite(E1)) and np.all(np.isfinite(E2))):
            raise NonFiniteField("non-finite field value")
        # H is affine in E and a + b = 1/2, so a H(E1) + b H(E2) = H(2 (a E1 + b E2)) / 2
        first = _expm_sym(sys.hamiltonian(2 * (_CF_B * E1 + _CF_A * E2)), 0.5 * h)
        second = _expm_sym(sys.hamiltonian(2 * (_CF_A * E1 + _CF_B * E2)), 0.5 * h)
        return second @ first
    if method == "midpoint":
        E = fld.value(ts + 0.5 * h)
        if not np.all(np.isfinite(E)):
            raise NonFiniteField("non-finite field value")
        return _expm_sym(sys.hamiltonian(E), h)
    raise ValueError(f"unknown method {method!r}")


def _rk4(sys, fld, c, ts, h):
    mu = sys.dipole
    eps = sys.energies

    def rhs(t, y):
        return -1j * (eps * y - float(fld.value(t)) * (mu @ y))

    for t0, hh in zip(ts, h):
        k1 = rhs(t0, c)
        k2 = rhs(t0 + hh / 2, c + hh / 2 * k1)
        k3 = rhs(t0 + hh / 2, c + hh / 2 * k2)
        k4 = rhs(t0 + hh, c + hh * k3)
        c = c + hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return c


def propagate(
    sys: NLevelSystem,
    fld,
    c0: WaveState,
    t_end: float,
    opts: PropagationOptions | None = None,
    **overrides,
) -> Trajectory:
    """Integrate the Schroedinger equation from ``c0.t`` to ``t_end``.

    Parameters
    ----------
    sys : NLevelSystem
    fld : field model
    c0 : WaveState
        Normalized initial amplitudes at time ``c0.t``.
    t_end : float
    opts : PropagationOptions, optional
        Keyword ``overrides`` replace individual option fields.

    Returns
    -------
    Trajectory
        Amplitudes on the output grid (``t_eval`` or ``n_out`` uniform points).
    """
    opts = opts or PropagationOptions()
    if overrides:
        opts = PropagationOptions(**{**opts.__dict__, **overrides})
    if c0.amplitudes.size != sys.n:
        raise ValueError(f"state has {c0.amplitudes.size} amplitudes for a {sys.n}-level system")
    t0 = float(c0.t)
    if not t_end > t0:
        raise ValueError("t_end must exceed the initial time")
    if opts.t_eval is not None:
        t_out = np.asarray(opts.t_eval, dtype=float)
        if t_out[0] < t0 or t_out[-1] > t_end or np.any(np.diff(t_out) <= 0):
            raise ValueError("t_eval must be strictly increasing within [t0, t_end]")
        grid = np.unique(np.concatenate([[t0], t_out]))
    else:
        t_out = np.linspace(t0, t_end, opts.n_out)
        grid = t_out
    n_steps = _step_plan(sys, fld, grid, opts)
    seg = np.repeat(np.arange(grid.size - 1), n_steps)
    starts = np.cumsum(n_steps) - n_steps
    k = np.arange(n_steps.sum()) - np.repeat(starts, n_steps)
    h_seg = np.diff(grid) / n_steps
    h = h_seg[seg]
    ts = grid[seg] + k * h
    ends = np.cumsum(n_steps)  # index after the last step of each interval

    out = np.empty((grid.size, sys.n), dtype=complex)
    c = c0.amplitudes.copy()
    out[0] = c
    if opts.method == "rk4":
        for j in range(grid.size - 1):
            sl = slice(ends[j] - n_steps[j], ends[j])
            c = _rk4(sys, fld, c, ts[sl], h[sl])
            out[j + 1] = c
    else:
        chunk = 20000
        j = 0
        for lo in range(0, ts.size, chunk):
            hi = min(lo + chunk, ts.size)
            U = _step_unitaries(sys, fld, ts[lo:hi], h[lo:hi], opts.method)
            for m in range(hi - lo):
                c = U[m] @ c
                while j < ends.size and ends[j] == lo + m + 1:
                    out[j + 1] = c
                    j += 1
    if opts.t_eval is not None and grid.size != t_out.size:
        out = out[1:]
    return Trajectory(
        times=t_out,
        amplitudes=out,
        n_steps=int(n_steps.sum()),
        method=opts.method,
    )


def interaction_amplitudes(traj: Trajectory, sys: NLevelSystem, fld, t0: float | None = None) -> np.ndarray:
    """phi_k(t) = exp(i int_{t0}^t [eps_k - mu_kk E]) c_k(t), with ``t0`` the first trajectory time."""
    t0 = float(traj.times[0]) if t0 is None else t0
    area = np.asarray(fld.integral(t0, traj.times), dtype=float)
    phase = np.outer(traj.times - t0, sys.energies) - np.outer(area, np.diag(sys.dipole))
    return np.exp(1j * phase) * traj.amplitudes

"""N-level dipolar systems, their coupling graph and transfer paths.

Levels are indexed from 0. Energies and dipole matrix elements are in atomic
units (hbar = 1). The Hamiltonian in the field-free eigenbasis is

    H_kk(t) = eps_k - mu_kk E(t),    H_kl(t) = -mu_kl E(t),

so the diagonal of the dipole matrix holds the permanent dipole moments.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    AmbiguousPath,
    AsymmetricDipole,
    DimensionMismatch,
    Disconnected,
    InfiniteResonance,
)

#: |mu_kl| below this is treated as "not coupled" when building the graph.
COUPLING_THRESHOLD = 1e-12
#: tolerated asymmetry of the input dipole matrix before it is rejected.
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class NLevelSystem:
    energies: np.ndarray
    dipole: np.ndarray

    @property
    def n(self) -> int:
        return self.energies.shape[0]

    def delta_eps(self, k: int, l: int) -> float:
        """Energy difference eps_k - eps_l."""
        return float(self.energies[k] - self.energies[l])

    def delta_mu(self, k: int, l: int) -> float:
        """Permanent dipole difference mu_kk - mu_ll."""
        return float(self.dipole[k, k] - self.dipole[l, l])

    def coupled(self, k: int, l: int) -> bool:
        return k != l and abs(self.dipole[k, l]) >= COUPLING_THRESHOLD

    def neighbours(self, k: int) -> list[int]:
        return [l for l in range(self.n) if self.coupled(k, l)]

    def hamiltonian(self, E) -> np.ndarray:
        """Real symmetric H(E) = diag(eps) - E*mu; broadcasts over an array of field values."""
        E = np.asarray(E, dtype=float)
        return np.diag(self.energies) - E[..., None, None] * self.dipole

    def scaled_couplings(self, lam: float) -> "NLevelSystem":
        """Copy with every off-diagonal dipole element multiplied by ``lam``."""
        mu = self.dipole * lam
        np.fill_diagonal(mu, np.diag(self.dipole))
        return new_system(self.energies, mu)

    def to_dict(self) -> dict:
        return {"energies": self.energies.tolist(), "dipole": self.dipole.tolist()}


def new_system(energies: Sequence[float], dipole) -> NLevelSystem:
    """Validate inputs and build an immutable :class:`NLevelSystem`.

    Raises
    ------
    DimensionMismatch
        If the dipole matrix is not square, does not match the number of
        energies, or fewer than two levels are given.
    AsymmetricDipole
        If ``max|mu_kl - mu_lk| > 1e-12``.
    """
    eps = np.array(energies, dtype=float)
    try:
        mu = np.array(dipole, dtype=float)
    except ValueError as exc:  # ragged rows
        raise DimensionMismatch(f"dipole matrix is not rectangular: {exc}") from None
    if eps.ndim != 1:
        raise DimensionMismatch("energies must be a flat list")
    if mu.ndim != 2 or mu.shape[0] != mu.shape[1]:
        raise DimensionMismatch(f"dipole matrix must be square, got shape {mu.shape}")
    if mu.shape[0] != eps.shape[0]:
        raise DimensionMismatch(
            f"{eps.shape[0]} energies but a {mu.shape[0]}x{mu.shape[1]} dipole matrix"
        )
    if eps.shape[0] < 2:
        raise DimensionMismatch("need at least two levels")
    if not (np.all(np.isfinite(eps)) and np.all(np.isfinite(mu))):
        raise DimensionMismatch("energies and dipole elements must be finite")
    asym = np.max(np.abs(mu - mu.T))
    if asym > SYMMETRY_TOL:
        raise AsymmetricDipole(f"dipole matrix asymmetric by {asym:.3g}")
    mu = 0.5 * (mu + mu.T)
    eps.setflags(write=False)
    mu.setflags(write=False)
    return NLevelSystem(eps, mu)


@dataclass(frozen=True)
class TransferPath:
    """Ordered level sequence ``levels[0] = i -> ... -> levels[-1] = f``.

    ``step_deltas[j]`` holds ``(eps[l_{j+1}] - eps[l_j], mu[l_{j+1}] - mu[l_j])``
    (diagonal moments); ``overall_delta`` the same between the endpoints.
    """

    levels: tuple[int, ...]
    step_deltas: tuple[tuple[float, float], ...]
    overall_delta: tuple[float, float]
    couplings: tuple[float, ...] = field(default=())

    @property
    def steps(self) -> int:
        return len(self.levels) - 1

    @property
    def initial(self) -> int:
        return self.levels[0]

    @property
    def final(self) -> int:
        return self.levels[-1]

    def subpath(self, start: int, stop: int) -> "TransferPath":
        """Path through ``levels[start..stop]`` (inclusive positions)."""
        lv = self.levels[start : stop + 1]
        return TransferPath(
            levels=lv,
            step_deltas=self.step_deltas[start:stop],
            overall_delta=(
                float(sum(d[0] for d in self.step_deltas[start:stop])),
                float(sum(d[1] for d in self.step_deltas[start:stop])),
            ),
            couplings=self.couplings[start:stop],
        )


def make_path(sys: NLevelSystem, levels: Sequence[int]) -> TransferPath:
    """Build a :class:`TransferPath` along explicit ``levels``; consecutive levels must be coupled."""
    levels = tuple(int(k) for k in levels)
    if len(levels) < 2:
        raise ValueError("a path needs at least two levels")
    for a, b in zip(levels, levels[1:]):
        if not sys.coupled(b, a):
            raise Disconnected(f"levels {a} and {b} are not coupled")
    steps = tuple((sys.delta_eps(b, a), sys.delta_mu(b, a)) for a, b in zip(levels, levels[1:]))
    i, f = levels[0], levels[-1]
    return TransferPath(
        levels=levels,
        step_deltas=steps,
        overall_delta=(sys.delta_eps(f, i), sys.delta_mu(f, i)),
        couplings=tuple(float(sys.dipole[b, a]) for a, b in zip(levels, levels[1:])),
    )


def shortest_path(sys: NLevelSystem, i: int, f: int) -> TransferPath:
    """Unique shortest coupled path from ``i`` to ``f`` (breadth-first search).

    Raises :class:`Disconnected` when ``f`` is unreachable and
    :class:`AmbiguousPath` when more than one shortest path exists.
    """
    if i == f:
        raise ValueError("initial and final level must differ")
    for k in (i, f):
        if not 0 <= k < sys.n:
            raise IndexError(f"level {k} out of range for a {sys.n}-level system")
    dist = {i: 0}
    count = {i: 1}
    parent: dict[int, int] = {}
    queue = deque([i])
    while queue:
        k = queue.popleft()
        for l in sys.neighbours(k):
            if l not in dist:
                dist[l] = dist[k] + 1
                count[l] = count[k]
                parent[l] = k
                queue.append(l)
            elif dist[l] == dist[k] + 1:
                count[l] += count[k]
    if f not in dist:
        raise Disconnected(f"no coupled path from level {i} to level {f}")
    if count[f] > 1:
        raise AmbiguousPath(f"{count[f]} distinct shortest paths from {i} to {f}")
    levels = [f]
    while levels[-1] != i:
        levels.append(parent[levels[-1]])
    return make_path(sys, levels[::-1])


def resonance_amplitude(path: TransferPath) -> float:
    """Overall dipole-resonance field A0 = d_eps_fi / d_mu_fi."""
    de, dm = path.overall_delta
    if abs(dm) < COUPLING_THRESHOLD:
        raise InfiniteResonance(
            f"permanent dipoles of levels {path.initial} and {path.final} coincide; A0 is infinite"
        )
    return de / dm


def is_dipole_harmonic(path: TransferPath, rtol: float = 1e-9) -> bool:
    """True when every step of ``path`` has the same resonance amplitude."""
    amps = []
    for de, dm in path.step_deltas:
        if abs(dm) < COUPLING_THRESHOLD:
            return False
        amps.append(de / dm)
    return bool(np.allclose(amps, amps[0], rtol=rtol, atol=0.0))


def diagonal_detuning(sys: NLevelSystem, subpath: TransferPath, refpath: TransferPath, E: float) -> float:
    """Difference of phase slopes g'_p(E) - g'_fi(E) between a subpath and the reference path."""
    de_p, dm_p = subpath.overall_delta
    de_r, dm_r = refpath.overall_delta
    return (de_p - dm_p * E) - (de_r - dm_r * E)


class Regime(enum.Enum):
    SLOW = "slow"
    FAST = "fast"
    INTERMEDIATE = "intermediate"


@dataclass(frozen=True)
class RegimeClass:
    kind: Regime
    omega_min: float
    omega_max: float
    min_gap: float
    max_gap: float


def path_gaps(path: TransferPath, sys: NLevelSystem) -> np.ndarray:
    """|d_eps| over all pairs of distinct levels on the path."""
    lv = path.levels
    return np.array(
        [abs(sys.delta_eps(a, b)) for ia, a in enumerate(lv) for b in lv[ia + 1 :]]
    )


def classify_regime(
    sys: NLevelSystem,
    path: TransferPath,
    field,
    slow_factor: float = 10.0,
    fast_factor: float = 10.0,
    threshold: float = 0.01,
) -> RegimeClass:
    """Compare level spacings on ``path`` with the field's spectral band.

    Slow when ``min|d_eps| >= slow_factor * omega_max``, fast when
    ``max|d_eps| <= omega_min / fast_factor``, intermediate otherwise.
    """
    from .fields import omega_bounds

    wmin, wmax = omega_bounds(field, threshold)
    gaps = path_gaps(path, sys)
    gmin, gmax = float(gaps.min()), float(gaps.max())
    if gmin >= slow_factor * wmax:
        kind = Regime.SLOW
    elif gmax * fast_factor <= wmin:
        kind = Regime.FAST
    else:
        kind = Regime.INTERMEDIATE
    return RegimeClass(kind, wmin, wmax, gmin, gmax)

"""Cumulative (running) integration on Chebyshev-Lobatto panels.

A window is cut into panels; on each panel the integrand is sampled at the
``order + 1`` Lobatto points and integrated as its interpolating polynomial.
Running integrals therefore stay spectrally accurate and can be composed
(an integrand built from a previous running integral is again sampled on the
same nodes), which is how nested time-ordered integrals are evaluated at a
cost linear in the number of nodes per nesting level.
"""

from __future__ import annotations

import functools
import math

import numpy as np
from numpy.polynomial import chebyshev as C


@functools.lru_cache(maxsize=16)
def _lobatto(order: int):
    x = -np.cos(np.pi * np.arange(order + 1) / order)
    V = C.chebvander(x, order)
    Vinv = np.linalg.inv(V)
    integ = np.zeros((order + 2, order + 1))
    for j in range(order + 1):
        e = np.zeros(order + 1)
        e[j] = 1.0
        integ[:, j] = C.chebint(e, lbnd=-1.0)
    Q = C.chebvander(x, order + 1) @ integ @ Vinv
    x.setflags(write=False)
    Q.setflags(write=False)
    return x, Q


class PanelGrid:
    """Panels covering ``[breaks[0], breaks[-1]]``; every break is a panel edge.

    Parameters
    ----------
    breaks : array_like
        Increasing times that must be panel edges (output times).
    max_width : float
        Largest allowed panel width.
    order : int
        Polynomial degree per panel.
    """

    def __init__(self, breaks, max_width: float, order: int = 16):
        breaks = np.unique(np.asarray(breaks, dtype=float))
        if breaks.size < 2:
            raise ValueError("need at least two distinct break points")
        edges = [breaks[:1]]
        for a, b in zip(breaks[:-1], breaks[1:]):
            k = max(1, int(math.ceil((b - a) / max_width)))
            edges.append(np.linspace(a, b, k + 1)[1:])
        self.edges = np.concatenate(edges)
        self.breaks = breaks
        self.order = order
        x, self._Q = _lobatto(order)
        self.width = np.diff(self.edges)
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        #: nodes with shape (panels, order + 1)
        self.nodes = mid[:, None] + 0.5 * self.width[:, None] * x[None, :]
        self.nodes[:, 0] = self.edges[:-1]
        self.nodes[:, -1] = self.edges[1:]
        self._break_idx = np.searchsorted(self.edges, breaks)

    @property
    def n_panels(self) -> int:
        return self.width.size

    def refined(self) -> "PanelGrid":
        """Same breaks with every panel halved."""
        g = PanelGrid(self.edges, 0.5 * float(self.width.max()) * (1 + 1e-12), self.order)
        g.breaks = self.breaks
        g._break_idx = np.searchsorted(g.edges, self.breaks)
        return g

    def cumulative(self, values: np.ndarray) -> np.ndarray:
        """Running integral from the first edge, sampled on ``nodes``.

        ``values`` has shape ``(..., panels, order + 1)``.
        """
        local = np.einsum("ij,...pj->...pi", self._Q, values) * (0.5 * self.width)[:, None]
        totals = local[..., -1]
        offset = np.concatenate(
            [np.zeros(totals.shape[:-1] + (1,), dtype=totals.dtype), np.cumsum(totals, axis=-1)[..., :-1]],
            axis=-1,
        )
        return local + offset[..., None]

    def integral(self, values: np.ndarray) -> np.ndarray:
        """Definite integral over the whole window."""
        return self.cumulative(values)[..., -1, -1]

    def at_edges(self, samples: np.ndarray) -> np.ndarray:
        """Values at the panel edges from node samples, shape ``(..., panels + 1)``."""
        return np.concatenate([samples[..., :1, 0], samples[..., :, -1]], axis=-1)

    def at_breaks(self, samples: np.ndarray) -> np.ndarray:
        """Values at the break points from node samples."""
        return self.at_edges(samples)[..., self._break_idx]

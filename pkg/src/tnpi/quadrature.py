"""Panel-based Gauss-Legendre rules for the bath frequency integrals."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import NumericalError

__all__ = ["gauss_legendre", "panel_rule", "adaptive_panel_integral"]


@lru_cache(maxsize=None)
def gauss_legendre(n_nodes):
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    return x, w


def panel_rule(a, b, n_panels, n_nodes=16):
    """Composite Gauss-Legendre rule on [a, b] with uniform panels."""
    if b <= a:
        raise ValueError(f"empty interval [{a}, {b}]")
    x, w = gauss_legendre(n_nodes)
    edges = np.linspace(a, b, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    nodes = (mid + half * x[None, :]).ravel()
    weights = (half * np.broadcast_to(w, (n_panels, len(w)))).ravel()
    return nodes, weights


def adaptive_panel_integral(f, a, b, n_panels0, rtol, max_levels=4, n_nodes=16):
    """Integrate a vector-valued ``f(nodes) -> (m, len(nodes))`` on [a, b].

    Doubles the panel count until the result changes by less than ``rtol``
    relative to its largest magnitude.  Raises NumericalError, quoting the
    achieved estimate, if the tolerance is never met.
    """
    prev = None
    err = np.inf
    n_panels = max(int(n_panels0), 1)
    for _ in range(max_levels):
        nodes, weights = panel_rule(a, b, n_panels, n_nodes)
        vals = f(nodes) @ weights
        if prev is not None:
            scale = max(float(np.max(np.abs(vals))), 1e-300)
            err = float(np.max(np.abs(vals - prev))) / scale
            if err <= rtol:
                return vals
        prev = vals
        n_panels *= 2
    raise NumericalError(
        f"panel quadrature did not converge to rtol={rtol} "
        f"(achieved ~{err:.3e} with {n_panels // 2} panels)"
    )

"""Qubit model presets, Pauli algebra and analytic references.

Basis convention: |0> is the +1 eigenvector of pauli("z").  Population
curves are therefore sign-unambiguous; a unit test enforces this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bath import _omega_upper, spectral_density_value, _j_coth
from .dynamics import SystemModel
from .quadrature import adaptive_panel_integral

__all__ = [
    "SpinBosonParams",
    "TwoQubitParams",
    "pauli",
    "pauli_eigenbasis",
    "build_spin_boson",
    "build_two_qubit",
    "pure_dephasing_reference",
    "dephasing_exponent",
]

_PAULI = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}

_EIGENBASIS = {
    # columns ordered so eigenvalues come out (+1, -1)
    "x": np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex) / math.sqrt(2.0),
    "y": np.array([[1.0, 1.0], [1.0j, -1.0j]], dtype=complex) / math.sqrt(2.0),
    "z": np.eye(2, dtype=complex),
}


def pauli(axis):
    """Standard Pauli matrix for axis 'x', 'y' or 'z'."""
    try:
        return _PAULI[axis].copy()
    except KeyError:
        raise ValueError(f"unknown Pauli axis {axis!r}") from None


def pauli_eigenbasis(axis):
    """(basis, eigenvalues) with columns ordered for eigenvalues (+1, -1)."""
    return _EIGENBASIS[axis].copy(), np.array([1.0, -1.0])


@dataclass(frozen=True)
class SpinBosonParams:
    epsilon: float
    delta: float

    def __post_init__(self):
        if not (np.isfinite(self.epsilon) and np.isfinite(self.delta)):
            raise ValueError("parameters must be finite")


@dataclass(frozen=True)
class TwoQubitParams:
    """Two qubits, no internal tunneling, excited states exchange-coupled."""

    epsilon_a: float
    epsilon_b: float
    j_coupling: float

    def __post_init__(self):
        vals = (self.epsilon_a, self.epsilon_b, self.j_coupling)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("parameters must be finite")


def build_spin_boson(params, basis=None):
    """H = (epsilon/2) sigma_z + delta sigma_x, in the given simulation basis."""
    h = 0.5 * params.epsilon * pauli("z") + params.delta * pauli("x")
    return SystemModel(2, h, np.eye(2, dtype=complex) if basis is None else basis)


def build_two_qubit(params, basis=None):
    """Two biased qubits with an exchange coupling between |01> and |10>."""
    sz = pauli("z")
    eye = np.eye(2, dtype=complex)
    h = 0.5 * params.epsilon_a * np.kron(sz, eye)
    h = h + 0.5 * params.epsilon_b * np.kron(eye, sz)
    h[1, 2] += params.j_coupling
    h[2, 1] += params.j_coupling
    return SystemModel(4, h, np.eye(4, dtype=complex) if basis is None else basis)


def dephasing_exponent(bath, ts, eigenvalues=(1.0, -1.0), rtol=1e-10):
    """Exact dephasing exponent Gamma(t) + i phi(t) for a static coupling.

    For coupling eigenvalues (a, b) the coherence between the two levels
    evolves as exp(-(Gamma + i phi)) with
      Gamma(t) = ((a - b)^2 / pi) int dw J(w) coth(beta w / 2) (1 - cos wt)/w^2,
      phi(t)  = -((a^2 - b^2) / pi) int dw J(w) (wt - sin wt)/w^2.
    """
    sd = bath.spectral_density
    beta = bath.beta
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if sd.alpha == 0.0:
        return np.zeros(ts.shape, dtype=complex)
    a, b = eigenvalues
    w_max = _omega_upper(sd, beta)
    t_max = float(np.max(np.abs(ts)))
    width = min(sd.omega_c, 2.0 * math.pi / beta)
    if t_max > 0:
        width = min(width, 2.0 * math.pi / t_max)
    n_panels0 = max(int(math.ceil(w_max / width)), 4)

    def integrand(nodes):
        g = _j_coth(sd, beta, nodes)
        j = spectral_density_value(sd, nodes)
        u = ts[:, None] * nodes[None, :]
        small = np.abs(u) < 1e-5
        us = np.where(small, 1.0, u)
        cos_part = np.where(small, 0.5 - u * u / 24.0, (1.0 - np.cos(us)) / (us * us))
        sin_part = np.where(small, u / 6.0 - u**3 / 120.0, (us - np.sin(us)) / (us * us))
        t2 = (ts * ts)[:, None]
        gamma = ((a - b) ** 2 / math.pi) * g[None, :] * cos_part * t2
        phi = -((a * a - b * b) / math.pi) * j[None, :] * sin_part * t2
        return gamma + 1j * phi

    return adaptive_panel_integral(integrand, 0.0, w_max, n_panels0, rtol)


def pure_dephasing_reference(bath, t, rtol=1e-10):
    """Coherence factor exp(-Gamma(t) - i phi(t)) for a sigma_z coupling.

    The coupling operator must be sigma_z (eigenvalues +1 and -1, matching
    pauli("z")); for that symmetric pair the phase phi vanishes.
    """
    if np.max(np.abs(bath.coupling_operator - pauli("z"))) > 1e-12:
        raise ValueError("reference requires a sigma_z coupling operator")
    expo = dephasing_exponent(bath, [t], rtol=rtol)[0]
    return complex(np.exp(-expo))

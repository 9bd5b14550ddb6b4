"""Harmonic-bath descriptions and the discretized memory kernel.

Units use hbar = 1 throughout; frequencies and inverse temperatures are
dimensionless as in the qubit benchmarks.

Index convention for the kernel table: time-step cells are
``[t_{k-1}, t_k]`` with ``t_k = k dt`` clamped at zero, so the k = 0 cell
is degenerate and the whole k' = 0 column of the table vanishes.  The
remaining cells tile ``[0, N dt]`` uniformly, which makes every interior
entry a function of the lag ``k - k'`` alone and leaves the system
propagators as the only half-step objects.  This deliberately carries no
endpoint-modified coefficients; see the README for how that relates to
other discretized path-integral conventions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError
from .quadrature import gauss_legendre, panel_rule, adaptive_panel_integral

__all__ = [
    "OHMIC_EXPONENTIAL",
    "SpectralDensity",
    "BathSpec",
    "TimeGrid",
    "EtaTable",
    "spectral_density_value",
    "correlation_function",
    "eta_coefficients",
    "save_eta_table",
    "load_eta_table",
]

OHMIC_EXPONENTIAL = "ohmic-exponential"

ETA_FILE_VERSION = 1


@dataclass(frozen=True)
class SpectralDensity:
    """Ohmic spectral density with exponential cutoff: 2 alpha w exp(-w/w_c)."""

    alpha: float
    omega_c: float
    kind: str = OHMIC_EXPONENTIAL

    def __post_init__(self):
        if self.kind != OHMIC_EXPONENTIAL:
            raise ValueError(f"unsupported spectral density kind {self.kind!r}")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.omega_c <= 0:
            raise ValueError("omega_c must be > 0")


@dataclass(frozen=True, eq=False)
class BathSpec:
    """One linearly coupled harmonic bath.

    ``coupling_operator`` is the Hermitian system operator the collective
    bath coordinate couples to, written in the computational basis.
    """

    spectral_density: SpectralDensity
    beta: float
    coupling_operator: np.ndarray
    label: str = "bath"

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        op = np.asarray(self.coupling_operator, dtype=complex)
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise ValueError(f"coupling operator must be square, got {op.shape}")
        if np.max(np.abs(op - op.conj().T)) > 1e-12:
            raise ValueError("coupling operator must be Hermitian to 1e-12")
        object.__setattr__(self, "coupling_operator", op)


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)


def spectral_density_value(sd, omega):
    """J(omega) = 2 alpha omega exp(-omega/omega_c), for omega >= 0."""
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise ValueError("spectral density is defined for omega >= 0")
    return 2.0 * sd.alpha * w * np.exp(-w / sd.omega_c)


def _j_coth(sd, beta, w):
    # J(w) * coth(beta w / 2) with the analytic w -> 0 limit 4 alpha / beta
    w = np.asarray(w, dtype=float)
    x = 0.5 * beta * w
    small = x < 1e-6
    xs = np.where(small, 1.0, x)
    coth = np.where(small, 0.0, 1.0 / np.tanh(xs))
    damp = 2.0 * sd.alpha * np.exp(-w / sd.omega_c)
    regular = damp * w * coth
    series = damp * (2.0 / beta + beta * w * w / 6.0)
    return np.where(small, series, regular)


def _omega_upper(sd, beta, tail_tol=1e-12):
    # Upper cutoff W on the frequency integrals from the exponential tail
    # bound 2 alpha W^2 exp(-W/w_c) max(coth(beta W / 2), 1) < tail_tol * scale.
    scale = max(2.0 * sd.alpha * sd.omega_c**2 * (1.0 + 2.0 / (beta * sd.omega_c)), 1e-30)
    w = 10.0 * sd.omega_c
    while w < 2000.0 * sd.omega_c:
        coth = 1.0 / math.tanh(0.5 * beta * w) if 0.5 * beta * w < 350 else 1.0
        bound = 2.0 * sd.alpha * w * w * math.exp(-w / sd.omega_c) * max(coth, 1.0)
        if bound <= tail_tol * scale:
            return w
        w += 2.0 * sd.omega_c
    return w


def _panels_for(sd, beta, t_max):
    # Resolve both the kernel scale min(w_c, 2 pi / beta) and the fastest
    # oscillation exp(i w t_max); about one period per panel.
    width = min(sd.omega_c, 2.0 * math.pi / beta)
    if t_max > 0:
        width = min(width, 2.0 * math.pi / t_max)
    return width


def correlation_batch(sd, beta, ts, rtol=1e-10):
    """Bath correlation function C(t) for an array of times.

    C(t) = (1/pi) * int_0^inf dw J(w) [coth(beta w / 2) cos(wt) - i sin(wt)],
    evaluated by adaptive panel Gauss-Legendre quadrature.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if sd.alpha == 0.0:
        return np.zeros(ts.shape, dtype=complex)
    w_max = _omega_upper(sd, beta)
    t_max = float(np.max(np.abs(ts))) if ts.size else 0.0
    n_panels0 = max(int(math.ceil(w_max / _panels_for(sd, beta, t_max))), 4)

    def integrand(nodes):
        g = _j_coth(sd, beta, nodes)
        j = spectral_density_value(sd, nodes)
        phase = np.exp(1j * ts[:, None] * nodes[None, :])
        return (phase.real * g[None, :] - 1j * phase.imag * j[None, :]) / math.pi

    return adaptive_panel_integral(integrand, 0.0, w_max, n_panels0, rtol)


def correlation_function(bath, t, rtol=1e-10):
    """C(t) for a single time; see ``correlation_batch``."""
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    return complex(correlation_batch(bath.spectral_density, bath.beta, [t], rtol)[0])


@dataclass(frozen=True, eq=False)
class EtaTable:
    """Discretized memory kernel of one bath on a uniform time grid.

    ``diag`` holds the self-cell value (identical for every k >= 1) and
    ``offdiag[lag - 1]`` the interior value at lag ``k - k' >= 1``.  The
    k' = 0 column and the (0, 0) entry are identically zero (degenerate
    first cell); ``eta`` and ``row`` apply that rule.
    """

    dt: float
    n_max: int
    diag: complex
    offdiag: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "offdiag", np.asarray(self.offdiag, dtype=complex))
        if self.offdiag.shape != (max(self.n_max - 1, 0),):
            raise ValueError(
                f"offdiag must hold lags 1..{self.n_max - 1}, got shape {self.offdiag.shape}"
            )

    def eta(self, k, kp):
        if not 0 <= kp <= k <= self.n_max:
            raise ValueError(f"eta index out of range: ({k}, {kp}) with n_max {self.n_max}")
        if kp == 0:
            return 0.0 + 0.0j
        if kp == k:
            return complex(self.diag)
        return complex(self.offdiag[k - kp - 1])

    def row(self, n):
        """eta_{n, k'} for k' = 0..n as a vector."""
        if not 1 <= n <= self.n_max:
            raise ValueError(f"row {n} not covered (n_max {self.n_max})")
        out = np.zeros(n + 1, dtype=complex)
        if n >= 2:
            out[1:n] = self.offdiag[: n - 1][::-1]
        out[n] = self.diag
        return out


def eta_coefficients(bath, grid, rtol=1e-8, n_nodes=12):
    """Cell double integrals of C over the time grid, as an EtaTable.

    Off-diagonal entries are tensor-product Gauss-Legendre (``n_nodes`` per
    axis) over the two cells, computed once per lag; the diagonal entry
    integrates over the triangular half cell.  A doubled-resolution check
    on the largest-lag entry and the diagonal guards the ``rtol`` contract.
    """
    sd = bath.spectral_density
    beta = bath.beta
    n = grid.n_steps
    dt = grid.dt
    if sd.alpha == 0.0:
        return EtaTable(dt, n, 0.0j, np.zeros(max(n - 1, 0), dtype=complex))

    w_max = _omega_upper(sd, beta)
    t_max = n * dt + dt
    n_panels = 2 * max(int(math.ceil(w_max / _panels_for(sd, beta, t_max))), 4)
    nodes, weights = panel_rule(0.0, w_max, n_panels)
    g = _j_coth(sd, beta, nodes) * weights
    j = spectral_density_value(sd, nodes) * weights

    def cell_values(offsets, lags):
        # C integrated against the cell rule for every lag at once:
        # C(l dt + delta) = (1/pi)[cos((l dt + delta) w) g - i sin(...) j]
        base = np.exp(1j * np.outer(offsets, nodes))  # (n_off, n_w)
        out = np.empty((len(lags), len(offsets)), dtype=complex)
        for i, lag in enumerate(lags):
            ph = base * np.exp(1j * (lag * dt) * nodes)[None, :]
            out[i] = (ph.real @ g - 1j * (ph.imag @ j)) / math.pi
        return out

    x, w = gauss_legendre(n_nodes)
    u = 0.5 * dt * (x + 1.0)
    wu = 0.5 * dt * w

    # off-diagonal: t' - t'' = lag*dt + (u - v), u and v in the unit cell
    duv = (u[:, None] - u[None, :]).ravel()
    wt2 = np.outer(wu, wu).ravel()
    lags = list(range(1, n))
    offdiag = np.zeros(max(n - 1, 0), dtype=complex)
    if lags:
        offdiag = cell_values(duv, lags) @ wt2

    # diagonal: triangle t'' <= t', mapped with v = u * xi
    xi = 0.5 * (x + 1.0)
    wxi = 0.5 * w
    tri_t = np.outer(u, 1.0 - xi).ravel()
    tri_w = np.outer(wu * u, wxi).ravel()
    diag = complex(cell_values(tri_t, [0])[0] @ tri_w)

    # doubled-node accuracy check on representative entries
    x2, w2 = gauss_legendre(2 * n_nodes)
    u2 = 0.5 * dt * (x2 + 1.0)
    wu2 = 0.5 * dt * w2
    xi2 = 0.5 * (x2 + 1.0)
    check_lag = lags[-1] if lags else None
    tri2_t = np.outer(u2, 1.0 - xi2).ravel()
    tri2_w = np.outer(wu2 * u2, 0.5 * w2).ravel()
    diag2 = complex(cell_values(tri2_t, [0])[0] @ tri2_w)
    scale = max(abs(diag), 1e-300)
    err = abs(diag - diag2) / scale
    if check_lag is not None:
        duv2 = (u2[:, None] - u2[None, :]).ravel()
        wt22 = np.outer(wu2, wu2).ravel()
        ref = complex(cell_values(duv2, [check_lag])[0] @ wt22)
        err = max(err, abs(offdiag[check_lag - 1] - ref) / scale)
    if err > rtol:
        raise NumericalError(
            f"eta cell quadrature missed rtol={rtol} (achieved ~{err:.3e}); "
            f"increase n_nodes"
        )

    meta = {"rtol": rtol, "n_nodes": n_nodes, "alpha": sd.alpha,
            "omega_c": sd.omega_c, "beta": beta}
    return EtaTable(dt, n, diag, offdiag, meta)


def save_eta_table(table, path):
    """Write an EtaTable to a versioned .npz artifact."""
    np.savez(
        path,
        version=np.int64(ETA_FILE_VERSION),
        dt=np.float64(table.dt),
        n_max=np.int64(table.n_max),
        diag=np.complex128(table.diag),
        offdiag=table.offdiag,
    )


def load_eta_table(path):
    with np.load(path) as data:
        version = int(data["version"])
        if version != ETA_FILE_VERSION:
            raise ValueError(f"unsupported eta table file version {version}")
        return EtaTable(
            float(data["dt"]),
            int(data["n_max"]),
            complex(data["diag"]),
            np.asarray(data["offdiag"], dtype=complex),
        )

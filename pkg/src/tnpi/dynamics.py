"""Reduced dynamics from influence functionals and system propagators.

The discretized path integral places half-step system propagators at both
ends of the evolution and full steps between, with one bath slice per
step.  A trajectory is read out of a grown influence chain in a single
left-to-right pass: left environments accumulate the initial state, the
propagator matrix elements and the chain sites; every intermediate time
closes the remaining chain with per-site trace caps (forward and backward
indices identified and summed, weight 1/d), which removes the future bath
slices exactly.

States are handled in the simulation basis internally and reported in the
computational basis.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .bath import eta_coefficients
from .influence import build_diagonal_if, build_gif
from .tensors import CompressionPolicy, svd_truncate

__all__ = [
    "SystemModel",
    "DensityMatrix",
    "Trajectory",
    "system_propagator",
    "propagate_diagonal",
    "propagate_gif",
    "combine_two_qubit",
    "build_process_tensor",
    "write_trajectory_csv",
]


def system_propagator(hamiltonian, dt, half=False):
    """Unitary exp(-i H tau), tau = dt or dt/2, via eigendecomposition."""
    h = np.asarray(hamiltonian, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"Hamiltonian must be square, got {h.shape}")
    if np.max(np.abs(h - h.conj().T)) > 1e-12:
        raise ValueError("Hamiltonian must be Hermitian to 1e-12")
    tau = 0.5 * dt if half else dt
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * tau * w)) @ v.conj().T


@dataclass(eq=False)
class SystemModel:
    """System Hamiltonian plus the basis the simulation runs in.

    ``basis`` columns are the simulation-basis kets written in the
    computational basis.  Propagators are cached per (dt, half) and
    returned in the simulation basis.  Treat instances as immutable after
    construction.
    """

    dim: int
    hamiltonian: np.ndarray
    basis: np.ndarray
    _propagators: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        h = np.asarray(self.hamiltonian, dtype=complex)
        b = np.asarray(self.basis, dtype=complex)
        if h.shape != (self.dim, self.dim) or b.shape != (self.dim, self.dim):
            raise ValueError("hamiltonian and basis must be dim x dim")
        if np.max(np.abs(h - h.conj().T)) > 1e-12:
            raise ValueError("Hamiltonian must be Hermitian to 1e-12")
        if np.max(np.abs(b @ b.conj().T - np.eye(self.dim))) > 1e-12:
            raise ValueError("basis must be unitary to 1e-12")
        self.hamiltonian = h
        self.basis = b

    def hamiltonian_in_basis(self):
        return self.basis.conj().T @ self.hamiltonian @ self.basis

    def propagator(self, dt, half=False):
        key = (float(dt), bool(half))
        if key not in self._propagators:
            self._propagators[key] = system_propagator(
                self.hamiltonian_in_basis(), dt, half
            )
        return self._propagators[key]

    def to_basis(self, rho):
        return self.basis.conj().T @ rho @ self.basis

    def from_basis(self, rho):
        return self.basis @ rho @ self.basis.conj().T


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A d x d state with an opt-in physicality check."""

    dim: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.dim, self.dim):
            raise ValueError(f"expected ({self.dim}, {self.dim}) values, got {v.shape}")
        object.__setattr__(self, "values", v)

    def validate(self, herm_tol=1e-10, trace_tol=1e-10, psd_tol=1e-8):
        """Raise if not Hermitian / trace-one / positive within tolerance."""
        v = self.values
        if np.max(np.abs(v - v.conj().T)) > herm_tol:
            raise ValueError("state is not Hermitian within tolerance")
        if abs(np.trace(v) - 1.0) > trace_tol:
            raise ValueError("state trace differs from 1 beyond tolerance")
        if float(np.min(np.linalg.eigvalsh(0.5 * (v + v.conj().T)))) < -psd_tol:
            raise ValueError("state has an eigenvalue below -psd_tol")
        return self


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time series of reduced states (computational basis) plus run metadata."""

    times: np.ndarray
    states: tuple
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", tuple(self.states))
        if len(t) != len(self.states):
            raise ValueError("times and states lengths differ")
        if len(t) > 1 and not np.all(np.diff(t) > 0):
            raise ValueError("times must be strictly increasing")

    def populations(self):
        """Real diagonal entries, shape (n_times, dim)."""
        return np.array([np.real(np.diag(s.values)) for s in self.states])


def _superop(u):
    # vec(rho)[a*d+b] = rho[a,b]; U rho U^dagger -> kron(U, conj(U))
    return np.kron(u, u.conj())


def _as_density(rho, dim):
    r = np.asarray(rho, dtype=complex)
    if r.shape != (dim, dim):
        raise ValueError(f"initial state must be ({dim}, {dim}), got {r.shape}")
    return DensityMatrix(dim, r).validate(psd_tol=1e-8).values


def _diag_trace_caps(sites, d):
    # caps[j] closes chain sites j..end with the per-site vector
    # delta_{x+,x-}/d, as a function of the bond entering site j
    cap = np.zeros(d * d, dtype=complex)
    cap[np.arange(d) * d + np.arange(d)] = 1.0 / d
    envs = [None] * (len(sites) + 1)
    envs[len(sites)] = np.ones(1, dtype=complex)
    for j in range(len(sites) - 1, -1, -1):
        m = np.tensordot(sites[j], cap, axes=[[1], [0]])  # (l, r)
        envs[j] = m @ envs[j + 1]
    return envs


def propagate_diagonal(model, bath, grid, policy, integ=None, *,
                       initial_state, eta=None):
    """Reduced dynamics with the bath coupling diagonal in the basis.

    Grows the diagonal influence functional over the full grid (exact
    growth factor, or the lambda ODE when ``integ`` is given) and contracts
    it against the half/full-step propagator matrix elements, emitting
    every intermediate state from one pass.  The state at t = 0 is the
    configured initial state, exactly.
    """
    t0 = time.perf_counter()
    d = model.dim
    x_b = model.to_basis(bath.coupling_operator)
    off = x_b - np.diag(np.diag(x_b))
    scale = max(float(np.max(np.abs(x_b))), 1.0)
    if float(np.max(np.abs(off))) > 1e-10 * scale:
        raise ValueError(
            "model basis must diagonalize the bath coupling operator "
            f"(max off-diagonal {float(np.max(np.abs(off))):.2e})"
        )
    eigenvalues = np.real(np.diag(x_b))
    if eta is None:
        eta = eta_coefficients(bath, grid)
    ifn = build_diagonal_if(eta, eigenvalues, grid.n_steps, policy, integ)

    rho0 = _as_density(initial_state, d)
    g_half = _superop(model.propagator(grid.dt, half=True))
    g_full = _superop(model.propagator(grid.dt, half=False))
    sites = ifn.mps.sites
    caps = _diag_trace_caps(sites, d)

    states = [DensityMatrix(d, rho0)]
    v0 = model.to_basis(rho0).reshape(d * d)
    env = (sites[0][0] * v0[:, None]).T  # (bond, pair)
    for k in range(1, grid.n_steps + 1):
        env = env @ (g_half.T if k == 1 else g_full.T)
        env = np.einsum("lpr,lp->rp", sites[k], env)
        vec = g_half @ (caps[k + 1] @ env)
        states.append(DensityMatrix(d, model.from_basis(vec.reshape(d, d))))

    meta = {
        "method": "ode-diagonal" if integ is not None else "tempo-diagonal",
        "dt": grid.dt,
        "n_steps": grid.n_steps,
        "svd_cutoff": policy.svd_cutoff,
        "max_bond": policy.max_bond,
        "n_lambda_steps": integ.n_lambda_steps if integ is not None else None,
        "discarded_weight": ifn.discarded,
        "eta": dict(getattr(eta, "meta", {}) or {}),
        "wall_time_s": time.perf_counter() - t0,
    }
    return Trajectory(grid.dt * np.arange(grid.n_steps + 1), tuple(states), meta)


def _gif_trace_caps(sites, d):
    # per-site cap: output pair identified and summed, input pair likewise,
    # weight 1/d; closes the remaining chain into a trace
    delta = np.eye(d).reshape(d * d)
    cap = (np.outer(delta, delta) / d).reshape(d**4)
    envs = [None] * (len(sites) + 1)
    envs[len(sites)] = np.ones(1, dtype=complex)
    for j in range(len(sites) - 1, -1, -1):
        m = np.tensordot(sites[j], cap, axes=[[1], [0]])
        envs[j] = m @ envs[j + 1]
    return envs


def propagate_gif(model, gif, grid, *, initial_state):
    """Contract a generalized influence functional with system propagators.

    The chain may be longer than the grid; the unused tail is closed by
    the trace caps.  The chain must have been grown in the model's basis.
    """
    t0 = time.perf_counter()
    d = model.dim
    if gif.basis_dim != d:
        raise ValueError(f"basis dimension mismatch: gif {gif.basis_dim}, model {d}")
    if gif.n_steps < grid.n_steps:
        raise ValueError(
            f"influence chain covers {gif.n_steps} steps, grid needs {grid.n_steps}"
        )
    rho0 = _as_density(initial_state, d)
    d2 = d * d
    g_half = _superop(model.propagator(grid.dt, half=True))
    g_full = _superop(model.propagator(grid.dt, half=False))
    # site legs unfold to (output pair, input pair)
    sites = [s.reshape(s.shape[0], d2, d2, s.shape[2]) for s in gif.mps.sites]
    caps = _gif_trace_caps(gif.mps.sites, d)

    states = [DensityMatrix(d, rho0)]
    w = g_half @ model.to_basis(rho0).reshape(d2)
    env = np.tensordot(sites[0][0], w, axes=[[1], [0]]).T  # (bond, out)
    for k in range(1, grid.n_steps + 1):
        if k > 1:
            env = env @ g_full.T
            env = np.einsum("loir,li->ro", sites[k - 1], env)
        vec = g_half @ (caps[k] @ env)
        states.append(DensityMatrix(d, model.from_basis(vec.reshape(d, d))))

    meta = {
        "method": "gif",
        "dt": grid.dt,
        "n_steps": grid.n_steps,
        "gif_steps": gif.n_steps,
        "discarded_weight": gif.discarded,
        "wall_time_s": time.perf_counter() - t0,
    }
    return Trajectory(grid.dt * np.arange(grid.n_steps + 1), tuple(states), meta)


def combine_two_qubit(model2, gif_a, gif_b, grid, *, initial_state,
                      policy=None):
    """Two qubits with independent environments and a coupled propagator.

    Per step, each chain's site tensor acts on its qubit's indices of the
    boundary object (bond of A, bond of B, two-qubit superoperator index)
    while the full four-level propagator couples the qubits.  The boundary
    is rank-truncated across the A|B split with ``policy`` after each site
    application.  The two-qubit superoperator index unfolds row-major as
    (a+, b+, a-, b-).
    """
    t0 = time.perf_counter()
    if model2.dim != 4:
        raise ValueError("combiner needs a 4-level model")
    for g in (gif_a, gif_b):
        if g.basis_dim != 2:
            raise ValueError("per-qubit chains must have basis dimension 2")
        if g.n_steps < grid.n_steps:
            raise ValueError(
                f"influence chain covers {g.n_steps} steps, grid needs {grid.n_steps}"
            )
    policy = policy or CompressionPolicy()
    rho0 = _as_density(initial_state, 4)
    g_half = _superop(model2.propagator(grid.dt, half=True))
    g_full = _superop(model2.propagator(grid.dt, half=False))
    # per-qubit site legs unfold to (out pair 4, in+ 2, in- 2)
    sites_a = [s.reshape(s.shape[0], 4, 2, 2, s.shape[2]) for s in gif_a.mps.sites]
    sites_b = [s.reshape(s.shape[0], 4, 2, 2, s.shape[2]) for s in gif_b.mps.sites]
    caps_a = _gif_trace_caps(gif_a.mps.sites, 2)
    caps_b = _gif_trace_caps(gif_b.mps.sites, 2)

    def apply_sites(env, k):
        # env: (ra, rb, 16) with 16 = (a+, b+, a-, b-)
        t = env.reshape(env.shape[0], env.shape[1], 2, 2, 2, 2)
        # A chain consumes (a+, a-): axes 2 and 4
        t = np.einsum("loxys,lbxcyd->sbocd", sites_a[k - 1], t)
        # B chain consumes (b+, b-): now axes 3 and 4 of (ra', rb, oA, b+, b-)
        t = np.einsum("mpcdu,rmocd->ruop", sites_b[k - 1], t)
        # refuse (oA=(a+,a-), oB=(b+,b-)) into (a+, b+, a-, b-)
        ra, rb = t.shape[0], t.shape[1]
        t = t.reshape(ra, rb, 2, 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return np.ascontiguousarray(t).reshape(ra, rb, 16)

    def truncate_boundary(env):
        ra, rb = env.shape[0], env.shape[1]
        if ra * 4 <= 1 or rb * 4 <= 1:
            return env
        t = env.reshape(ra, rb, 2, 2, 2, 2)  # (ra, rb, a+, b+, a-, b-)
        t = t.transpose(0, 2, 4, 1, 3, 5).reshape(ra * 4, rb * 4)
        u, s, vt, _ = svd_truncate(t, policy)
        t = (u * s) @ vt
        t = t.reshape(ra, 2, 2, rb, 2, 2).transpose(0, 3, 1, 4, 2, 5)
        return np.ascontiguousarray(t).reshape(ra, rb, 16)

    states = [DensityMatrix(4, rho0)]
    env = (g_half @ model2.to_basis(rho0).reshape(16)).reshape(1, 1, 16)
    for k in range(1, grid.n_steps + 1):
        if k > 1:
            env = np.tensordot(env, g_full, axes=[[2], [1]])
        env = truncate_boundary(apply_sites(env, k))
        m = np.einsum("a,b,abs->s", caps_a[k], caps_b[k], env)
        vec = g_half @ m
        states.append(DensityMatrix(4, model2.from_basis(vec.reshape(4, 4))))

    meta = {
        "method": "gif-two-qubit",
        "dt": grid.dt,
        "n_steps": grid.n_steps,
        "svd_cutoff": policy.svd_cutoff,
        "max_bond": policy.max_bond,
        "discarded_weight": math.hypot(gif_a.discarded, gif_b.discarded),
        "wall_time_s": time.perf_counter() - t0,
    }
    return Trajectory(grid.dt * np.arange(grid.n_steps + 1), tuple(states), meta)


def build_process_tensor(baths, basis, grid, integ):
    """Grow a generalized influence functional for the given baths.

    ``baths`` is a sequence of BathSpec; their coupling operators are
    rotated into ``basis`` (columns = simulation kets).  The result is
    system independent and reusable for any Hamiltonian in that basis.
    """
    basis = np.asarray(basis, dtype=complex)
    d = basis.shape[0]
    pairs = []
    labels = []
    for b in baths:
        pairs.append(
            (eta_coefficients(b, grid), basis.conj().T @ b.coupling_operator @ basis)
        )
        labels.append(b.label)
    return build_gif(pairs, grid.n_steps, d, integ, tuple(labels))


def _fmt(value):
    # stable formatting: quantize at 1e-12, then 17 significant digits
    return format(round(float(value), 12), ".17g")


def write_trajectory_csv(trajectory, path):
    """Trajectory CSV: t, then Re/Im of each state entry in row-major order."""
    d = trajectory.states[0].dim
    cols = ["t"]
    for i in range(d):
        for j in range(d):
            cols.append(f"re_rho_{i}{j}")
            cols.append(f"im_rho_{i}{j}")
    lines = [",".join(cols)]
    for t, state in zip(trajectory.times, trajectory.states):
        row = [_fmt(t)]
        for v in state.values.reshape(d * d):
            row.append(_fmt(v.real))
            row.append(_fmt(v.imag))
        lines.append(",".join(row))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")

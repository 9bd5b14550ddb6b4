"""Dense complex tensor chains: MPS/MPO containers and SVD compression.

Dense tensors are plain ``numpy`` arrays of ``complex128`` in row-major
order.  MPS site tensors are rank-3 with index order (left bond, physical,
right bond); MPO site tensors are rank-4 with index order (left bond,
physical out, physical in, right bond).  Boundary bonds always have
extent 1.

All containers are frozen values: operations return new objects and never
mutate their inputs, so independent contractions are safe to run
concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError

__all__ = [
    "MPS",
    "MPO",
    "CompressionPolicy",
    "svd_truncate",
    "mps_apply_mpo",
    "mps_append_site",
    "mps_contract",
    "mps_compress",
    "mps_add",
    "mps_dense",
    "mps_log_norm",
    "identity_mpo",
]

_DENSE_GUARD = 10_000_000


def _as_sites(sites, rank, kind):
    out = []
    for j, s in enumerate(sites):
        a = np.asarray(s, dtype=complex)
        if a.ndim != rank:
            raise ValueError(f"{kind} site {j} has rank {a.ndim}, expected {rank}")
        if min(a.shape) < 1:
            raise ValueError(f"{kind} site {j} has a zero extent: {a.shape}")
        out.append(a)
    return tuple(out)


def _check_chain(sites, kind):
    if len(sites) < 1:
        raise ValueError(f"{kind} needs at least one site")
    if sites[0].shape[0] != 1 or sites[-1].shape[-1] != 1:
        raise ValueError(f"{kind} boundary bonds must have extent 1")
    for j in range(len(sites) - 1):
        if sites[j].shape[-1] != sites[j + 1].shape[0]:
            raise ValueError(
                f"{kind} bond mismatch between sites {j} and {j + 1}: "
                f"{sites[j].shape[-1]} vs {sites[j + 1].shape[0]}"
            )


@dataclass(frozen=True, eq=False)
class MPS:
    """Chain of rank-3 tensors, index order (left bond, physical, right bond)."""

    sites: tuple

    def __post_init__(self):
        object.__setattr__(self, "sites", _as_sites(self.sites, 3, "MPS"))
        _check_chain(self.sites, "MPS")

    def __len__(self):
        return len(self.sites)

    @property
    def physical_dims(self):
        return tuple(s.shape[1] for s in self.sites)

    @property
    def bond_dims(self):
        return tuple(s.shape[2] for s in self.sites[:-1])


@dataclass(frozen=True, eq=False)
class MPO:
    """Chain of rank-4 tensors, index order (left bond, out, in, right bond)."""

    sites: tuple

    def __post_init__(self):
        object.__setattr__(self, "sites", _as_sites(self.sites, 4, "MPO"))
        _check_chain(self.sites, "MPO")

    def __len__(self):
        return len(self.sites)

    @property
    def physical_dims(self):
        return tuple(s.shape[2] for s in self.sites)

    @property
    def bond_dims(self):
        return tuple(s.shape[3] for s in self.sites[:-1])


@dataclass(frozen=True)
class CompressionPolicy:
    """Relative SVD truncation settings.

    ``svd_cutoff`` drops singular values with ``s_i / s_max <= svd_cutoff``;
    ``max_bond`` caps the kept count; ``renormalize`` rescales the kept
    values so the Frobenius norm is preserved.
    """

    svd_cutoff: float = 1e-9
    max_bond: int | None = None
    renormalize: bool = False

    def __post_init__(self):
        if self.svd_cutoff < 0:
            raise ValueError("svd_cutoff must be >= 0")
        if self.max_bond is not None and self.max_bond < 1:
            raise ValueError("max_bond must be >= 1")


EXACT = CompressionPolicy(svd_cutoff=0.0)


def _robust_svd(m):
    try:
        return np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but sturdier
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")


def svd_truncate(matrix, policy):
    """Truncated SVD of a rank-2 tensor.

    Returns ``(u, s, vt, discarded_weight)`` where the kept singular values
    are those with ``s_i / s_max > svd_cutoff`` (capped at ``max_bond``, at
    least one kept) and ``discarded_weight`` is the root square sum of the
    dropped values relative to the root square sum of all values.
    """
    m = np.asarray(matrix, dtype=complex)
    if m.ndim != 2:
        raise ValueError(f"svd_truncate needs a rank-2 tensor, got rank {m.ndim}")
    if not np.all(np.isfinite(m)):
        raise NumericalError("svd_truncate: input contains non-finite values")
    u, s, vt = _robust_svd(m)
    total = float(np.linalg.norm(s))
    if total == 0.0:
        return u[:, :1], s[:1], vt[:1, :], 0.0
    keep = int(np.count_nonzero(s / s[0] > policy.svd_cutoff))
    keep = max(keep, 1)
    if policy.max_bond is not None:
        keep = min(keep, policy.max_bond)
    discarded = float(np.linalg.norm(s[keep:]) / total)
    u, s, vt = u[:, :keep], s[:keep], vt[:keep, :]
    if policy.renormalize and discarded > 0.0:
        s = s * (total / float(np.linalg.norm(s)))
    return u, s, vt, discarded


def _zip_site(a, w):
    # a: (l, p, r); w: (wl, po, p, wr) -> (wl*l, po, wr*r)
    t = np.tensordot(w, a, axes=[[2], [1]])  # (wl, po, wr, l, r)
    t = t.transpose(0, 3, 1, 2, 4)
    wl, l, po, wr, r = t.shape
    return np.ascontiguousarray(t).reshape(wl * l, po, wr * r)


def _zip_apply(state, op):
    """Sitewise MPO-MPS contraction with multiplied bonds, no compression."""
    if len(op) != len(state):
        raise ValueError(f"length mismatch: MPS {len(state)}, MPO {len(op)}")
    for j, (a, w) in enumerate(zip(state.sites, op.sites)):
        if w.shape[2] != a.shape[1]:
            raise ValueError(
                f"physical extent mismatch at site {j}: MPS {a.shape[1]}, MPO in {w.shape[2]}"
            )
    return MPS(tuple(_zip_site(a, w) for a, w in zip(state.sites, op.sites)))


def mps_compress(state, policy):
    """Two-sweep compression: left-to-right QR, then right-to-left SVD.

    Returns ``(mps, discarded_weight)``; the discarded weight is the root
    square sum of the per-bond relative discards.
    """
    n = len(state)
    if n == 1:
        return state, 0.0
    sites = list(state.sites)
    for j in range(n - 1):
        l, p, r = sites[j].shape
        q, carry = np.linalg.qr(sites[j].reshape(l * p, r))
        sites[j] = q.reshape(l, p, -1)
        sites[j + 1] = np.tensordot(carry, sites[j + 1], axes=[[1], [0]])
    discards = []
    for j in range(n - 1, 0, -1):
        l, p, r = sites[j].shape
        u, s, vt, dw = svd_truncate(sites[j].reshape(l, p * r), policy)
        k = s.size
        sites[j] = vt.reshape(k, p, r)
        sites[j - 1] = np.tensordot(sites[j - 1], u * s, axes=[[2], [0]])
        discards.append(dw)
    return MPS(tuple(sites)), float(np.sqrt(np.sum(np.square(discards))))


def mps_apply_mpo(state, op, policy):
    """Apply an MPO to an MPS and compress.

    Exact sitewise contraction (bond extents multiply) followed by the
    two-sweep compression; exact when the policy cutoff is 0 and no bond
    cap is set.  Returns ``(mps, discarded_weight)``.
    """
    return mps_compress(_zip_apply(state, op), policy)


def mps_append_site(state, site, end="right"):
    """Append one rank-3 site tensor at the ``left`` or ``right`` boundary."""
    a = np.asarray(site, dtype=complex)
    if a.ndim != 3:
        raise ValueError(f"appended site must be rank 3, got rank {a.ndim}")
    if end == "right":
        if a.shape[0] != state.sites[-1].shape[-1]:
            raise ValueError(
                f"bond mismatch: chain ends with {state.sites[-1].shape[-1]}, "
                f"site starts with {a.shape[0]}"
            )
        return MPS(state.sites + (a,))
    if end == "left":
        if a.shape[-1] != state.sites[0].shape[0]:
            raise ValueError(
                f"bond mismatch: site ends with {a.shape[-1]}, "
                f"chain starts with {state.sites[0].shape[0]}"
            )
        return MPS((a,) + state.sites)
    raise ValueError(f"end must be 'left' or 'right', got {end!r}")


def mps_contract(state, site_vectors, open_sites=None):
    """Contract physical legs against per-site vectors.

    ``site_vectors`` is a full-length sequence; an entry may be ``None`` for
    a site left open (``open_sites``, when given, must list exactly those
    positions).  Returns a dense array over the open sites' physical
    indices in chain order; a 0-d array when every site is closed.
    """
    if len(site_vectors) != len(state):
        raise ValueError(
            f"need one vector slot per site: got {len(site_vectors)} for {len(state)} sites"
        )
    opens = {j for j, v in enumerate(site_vectors) if v is None}
    if open_sites is not None and set(open_sites) != opens:
        raise ValueError("open_sites does not match the None entries of site_vectors")
    size = 1
    for j in opens:
        size *= state.sites[j].shape[1]
    if size > _DENSE_GUARD:
        raise ValueError(f"open output would hold {size} entries (guard {_DENSE_GUARD})")

    env = np.ones((1,), dtype=complex)  # (open..., bond)
    for j, (a, v) in enumerate(zip(state.sites, site_vectors)):
        if v is None:
            env = np.tensordot(env, a, axes=[[-1], [0]])  # (..., p, r)
        else:
            vec = np.asarray(v, dtype=complex)
            if vec.shape != (a.shape[1],):
                raise ValueError(
                    f"vector for site {j} has shape {vec.shape}, expected ({a.shape[1]},)"
                )
            m = np.tensordot(vec, a, axes=[[0], [1]])  # (l, r)
            env = np.tensordot(env, m, axes=[[-1], [0]])
    return env[..., 0]


def mps_dense(state):
    """Full dense expansion over all physical legs (size-guarded)."""
    return mps_contract(state, [None] * len(state))


def mps_add(a, b, coeff=1.0):
    """Direct-sum addition ``a + coeff * b`` of two equal-shape chains."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if a.physical_dims != b.physical_dims:
        raise ValueError("physical extents differ")
    n = len(a)
    if n == 1:
        return MPS((a.sites[0] + coeff * b.sites[0],))
    out = []
    for j, (x, y) in enumerate(zip(a.sites, b.sites)):
        if j == 0:
            out.append(np.concatenate([x, coeff * y], axis=2))
        elif j == n - 1:
            out.append(np.concatenate([x, y], axis=0))
        else:
            z = np.zeros(
                (x.shape[0] + y.shape[0], x.shape[1], x.shape[2] + y.shape[2]),
                dtype=complex,
            )
            z[: x.shape[0], :, : x.shape[2]] = x
            z[x.shape[0] :, :, x.shape[2] :] = y
            out.append(z)
    return MPS(tuple(out))


def mps_log_norm(state):
    """Natural log of the Frobenius norm, computed with per-site rescaling."""
    env = np.ones((1, 1), dtype=complex)  # (bra bond, ket bond)
    log_scale = 0.0
    for a in state.sites:
        t = np.tensordot(env, a, axes=[[1], [0]])  # (bra l, p, ket r)
        env = np.tensordot(a.conj(), t, axes=[[0, 1], [0, 1]])  # (bra r, ket r)
        peak = float(np.max(np.abs(env)))
        if peak == 0.0:
            return -np.inf
        env = env / peak
        log_scale += np.log(peak)
    return 0.5 * (log_scale + np.log(float(np.abs(env[0, 0]))))


def identity_mpo(physical_dims):
    """MPO acting as the identity on every site."""
    sites = []
    for p in physical_dims:
        sites.append(np.eye(p, dtype=complex).reshape(1, p, p, 1))
    return MPO(tuple(sites))

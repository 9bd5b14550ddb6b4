"""Influence functionals as matrix product states.

Three growers live here.  The analytic one extends a diagonal-basis
influence functional by one time step with the exact exponential growth
factor as a bond-d^2 MPO.  The second reaches the same object by
integrating a linear differential equation in an auxiliary parameter
lambda from 0 to 1 with classical fixed-step RK4.  The third grows the
generalized influence functional, which carries separate forward/backward
input and output legs per step and therefore works in any orthonormal
basis with any number of non-commuting baths; its lambda derivative is a
sum of one MPO term per bath with bond extent 1 + n_baths.

Index conventions
-----------------
Diagonal chains have one site per time index k = 0..N with a fused
physical leg (x+_k, x-_k) of extent d^2 (index x+ * d + x-).  Generalized
chains have one site per step k = 1..N with a fused physical leg
(s+_{k,1}, s-_{k,1}, s+_{k-1,2}, s-_{k-1,2}) of extent d^4, row-major,
grouping the step's forward/backward output legs ("1") and input legs
("2").  The k = 0 time slice carries no bath weight in either formulation
(see the bath module), so the diagonal chain's site 0 is the constant-one
tensor at initialization.

The lambda derivative of the growth factor carries a global minus sign
relative to the growth exponent; both endpoint identities (unity at
lambda = 0, the full growth factor at lambda = 1) pin it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import NumericalError
from .tensors import (
    MPS,
    MPO,
    CompressionPolicy,
    _zip_apply,
    mps_add,
    mps_append_site,
    mps_apply_mpo,
    mps_compress,
    mps_log_norm,
)

__all__ = [
    "DiagonalIF",
    "GeneralizedIF",
    "LambdaIntegrator",
    "diagonal_if_init",
    "brute_force_influence",
    "grow_influence_diagonal",
    "grow_influence_ode",
    "gif_init",
    "gif_rhs_mpo",
    "grow_gif",
    "brute_force_gif",
    "build_diagonal_if",
    "build_gif",
    "save_gif",
    "load_gif",
]

_SIZE_GUARD = 10_000_000
_NORM_GUARD = 1e6

GIF_FILE_VERSION = 1


@dataclass(frozen=True, eq=False)
class DiagonalIF:
    """Influence functional over diagonal-basis paths, one site per k = 0..N."""

    mps: MPS
    eigenvalues: np.ndarray
    n_steps: int
    discarded: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.eigenvalues, dtype=float)
        object.__setattr__(self, "eigenvalues", x)
        d2 = len(x) ** 2
        if self.mps.physical_dims != (d2,) * (self.n_steps + 1):
            raise ValueError("DiagonalIF needs n_steps + 1 sites of extent d^2")


@dataclass(frozen=True, eq=False)
class GeneralizedIF:
    """Process-tensor MPS over grouped in/out legs, one site per step k = 1..N."""

    mps: MPS | None
    basis_dim: int
    n_steps: int
    bath_labels: tuple = ()
    discarded: float = 0.0

    def __post_init__(self):
        if self.n_steps == 0:
            if self.mps is not None:
                raise ValueError("zero-step GeneralizedIF holds no MPS")
            return
        d4 = self.basis_dim**4
        if self.mps is None or self.mps.physical_dims != (d4,) * self.n_steps:
            raise ValueError("GeneralizedIF needs n_steps sites of extent d^4")


@dataclass(frozen=True)
class LambdaIntegrator:
    """Fixed-step classical RK4 on lambda in [0, 1].

    The growth equation is linear with a lambda-independent operator, so
    the classical RK4 update equals applying the degree-4 stability
    polynomial of that operator.  The default scheme "rk4" applies it in
    factored form, one linear factor at a time with one compression after
    each factor; "rk4-stages" forms the four stage combinations literally
    and compresses after each combination.  Both produce the identical
    map up to compression noise; the factored form keeps the transient
    bond growth at (1 + n_baths) x and is several times cheaper.
    """

    n_lambda_steps: int = 8
    policy: CompressionPolicy = CompressionPolicy()
    scheme: str = "rk4"

    def __post_init__(self):
        if self.n_lambda_steps < 1:
            raise ValueError("n_lambda_steps must be >= 1")
        if self.scheme not in ("rk4", "rk4-stages"):
            raise ValueError(f"unsupported scheme {self.scheme!r}")


# roots of 1 + z + z^2/2 + z^3/6 + z^4/24; the RK4 update for y' = B y is
# prod_i (1 - (h/r_i) B) applied to y
_RK4_ROOTS = tuple(sorted(np.roots([1.0 / 24.0, 1.0 / 6.0, 0.5, 1.0, 1.0]),
                          key=lambda z: (z.real, z.imag)))


def _pair_values(eigenvalues):
    # fused pair index c = x+ * d + x-
    x = np.asarray(eigenvalues, dtype=float)
    d = len(x)
    return np.repeat(x, d), np.tile(x, d)


def diagonal_if_init(eigenvalues):
    """Zero-step diagonal influence functional (site k = 0, identically 1)."""
    d2 = len(eigenvalues) ** 2
    ones = np.ones((1, d2, 1), dtype=complex)
    return DiagonalIF(MPS((ones,)), eigenvalues, 0)


def brute_force_influence(eta, n_steps, eigenvalues):
    """Dense influence functional by direct path summation.

    Entry at path (x_0, .., x_N) is exp(-F) with
    F = sum_{k=0..N} sum_{k'=0..k} (x+_k - x-_k)
        (eta_{kk'} x+_{k'} - conj(eta_{kk'}) x-_{k'}).
    Oracle scale only; the output has (d^2)^(N+1) entries.
    """
    d = len(eigenvalues)
    size = (d * d) ** (n_steps + 1)
    if size > _SIZE_GUARD:
        raise ValueError(
            f"dense influence functional would hold {size} entries "
            f"(guard {_SIZE_GUARD}); reduce n_steps"
        )
    xp, xm = _pair_values(eigenvalues)
    dz = xp - xm
    d2 = d * d
    shape = (d2,) * (n_steps + 1)
    F = np.zeros(shape, dtype=complex)

    def on_axis(vec, axis):
        s = [1] * (n_steps + 1)
        s[axis] = d2
        return vec.reshape(s)

    for k in range(n_steps + 1):
        for kp in range(k + 1):
            e = eta.eta(k, kp)
            if e == 0:
                continue
            b = e * xp - np.conj(e) * xm
            if kp == k:
                F += on_axis(dz * b, k)
            else:
                F += on_axis(dz.astype(complex), k) * on_axis(b, kp)
    return np.exp(-F)


def _diag_growth_mpo(eta_row, eigenvalues):
    # Exact growth factor coupling the new slice to every earlier one,
    # written as an MPO whose bond carries the new slice's pair value.
    xp, xm = _pair_values(eigenvalues)
    dz = xp - xm
    d2 = len(xp)
    n_new = len(eta_row) - 1  # chain sites 0 .. n_new
    rng = np.arange(d2)
    sites = []
    for k in range(n_new):
        e = eta_row[k]
        f = np.exp(-np.outer(dz, e * xp - np.conj(e) * xm))  # (bond value, p_k)
        if k == 0:
            w = np.zeros((1, d2, d2, d2), dtype=complex)
            w[0, rng, rng, :] = f.T
        else:
            w = np.zeros((d2, d2, d2, d2), dtype=complex)
            for b in range(d2):
                w[b, rng, rng, b] = f[b]
        sites.append(w)
    e = eta_row[n_new]
    f_self = np.exp(-dz * (e * xp - np.conj(e) * xm))
    w = np.zeros((d2, d2, d2, 1), dtype=complex)
    w[rng, rng, rng, 0] = f_self
    sites.append(w)
    return MPO(tuple(sites))


def _diag_rhs_mpo(eta_row, eigenvalues, gamma=None):
    # Lambda derivative B of the growth factor: a site-diagonal MPO of
    # bond extent 2 accumulating the earlier-slice couplings, with the new
    # slice's factor (and its self term) at the last site.  Global minus
    # sign folded into the accumulated factors.  With ``gamma`` set, the
    # MPO realizes Id + gamma * B instead (used by the factored RK4 form).
    xp, xm = _pair_values(eigenvalues)
    dz = xp - xm
    d2 = len(xp)
    n_new = len(eta_row) - 1
    rng = np.arange(d2)
    affine = gamma is not None
    g = 1.0 if gamma is None else gamma
    sites = []
    for k in range(n_new):
        e = eta_row[k]
        b = -(e * xp - np.conj(e) * xm)
        if k == 0:
            w = np.zeros((1, d2, d2, 2), dtype=complex)
            w[0, rng, rng, 0] = 1.0
            w[0, rng, rng, 1] = b
        else:
            w = np.zeros((2, d2, d2, 2), dtype=complex)
            w[0, rng, rng, 0] = 1.0
            w[0, rng, rng, 1] = b
            w[1, rng, rng, 1] = 1.0
        sites.append(w)
    e = eta_row[n_new]
    w = np.zeros((2, d2, d2, 1), dtype=complex)
    w[0, rng, rng, 0] = (1.0 if affine else 0.0) - g * dz * (e * xp - np.conj(e) * xm)
    w[1, rng, rng, 0] = g * dz
    sites.append(w)
    return MPO(tuple(sites))


def _rk4_lambda_step(y, rhs_mpo, h, policy):
    # One classical RK4 substep for dy/dlambda = B y with B constant in
    # lambda.  Stage combinations are compressed pairwise; raw MPO
    # applications are not.
    discards = []
    k1 = _zip_apply(y, rhs_mpo)
    u2, d = mps_compress(mps_add(y, k1, 0.5 * h), policy)
    discards.append(d)
    k2 = _zip_apply(u2, rhs_mpo)
    u3, d = mps_compress(mps_add(y, k2, 0.5 * h), policy)
    discards.append(d)
    k3 = _zip_apply(u3, rhs_mpo)
    u4, d = mps_compress(mps_add(y, k3, h), policy)
    discards.append(d)
    k4 = _zip_apply(u4, rhs_mpo)
    out = y
    for k, c in ((k1, h / 6.0), (k2, h / 3.0), (k3, h / 3.0), (k4, h / 6.0)):
        out, d = mps_compress(mps_add(out, k, c), policy)
        discards.append(d)
    return out, float(np.sqrt(np.sum(np.square(discards))))


def _integrate_lambda(y0, make_mpo, integ):
    # make_mpo(None) -> B; make_mpo(gamma) -> Id + gamma * B
    h = 1.0 / integ.n_lambda_steps
    log0 = mps_log_norm(y0)
    y = y0
    discards = []
    if integ.scheme == "rk4":
        factors = [make_mpo(-h / r) for r in _RK4_ROOTS]
    else:
        rhs = make_mpo(None)
    for _ in range(integ.n_lambda_steps):
        if integ.scheme == "rk4":
            for f in factors:
                y, d = mps_apply_mpo(y, f, integ.policy)
                discards.append(d)
        else:
            y, d = _rk4_lambda_step(y, rhs, h, integ.policy)
            discards.append(d)
        if mps_log_norm(y) - log0 > math.log(_NORM_GUARD):
            raise NumericalError(
                "lambda integration diverged (norm grew beyond "
                f"{_NORM_GUARD:g}x); check dt, eta table and cutoff"
            )
    return y, float(np.sqrt(np.sum(np.square(discards))))


def grow_influence_diagonal(current, eta, policy):
    """Extend a diagonal influence functional by one step, exactly.

    Applies the growth factor for step N + 1 (its couplings to slices
    0..N plus its self term) as a bond-d^2 MPO over the existing sites and
    one appended site, then compresses.
    """
    n_new = current.n_steps + 1
    row = eta.row(n_new)  # raises if the table does not cover the new row
    d2 = len(current.eigenvalues) ** 2
    grown = mps_append_site(current.mps, np.ones((1, d2, 1), dtype=complex))
    mpo = _diag_growth_mpo(row, current.eigenvalues)
    new_mps, dw = mps_apply_mpo(grown, mpo, policy)
    return replace(
        current,
        mps=new_mps,
        n_steps=n_new,
        discarded=math.hypot(current.discarded, dw),
    )


def grow_influence_ode(current, eta, integ):
    """Extend a diagonal influence functional by one step via the lambda ODE.

    The new site starts as the constant-one tensor (the lambda = 0 initial
    condition equals the current functional) and the coupling bracket is
    integrated from lambda = 0 to 1 with RK4.
    """
    n_new = current.n_steps + 1
    row = eta.row(n_new)
    d2 = len(current.eigenvalues) ** 2
    grown = mps_append_site(current.mps, np.ones((1, d2, 1), dtype=complex))
    new_mps, dw = _integrate_lambda(
        grown, lambda gamma: _diag_rhs_mpo(row, current.eigenvalues, gamma), integ
    )
    return replace(
        current,
        mps=new_mps,
        n_steps=n_new,
        discarded=math.hypot(current.discarded, dw),
    )


def _identity_channel_site(d):
    eye = np.eye(d)
    t = np.einsum("ac,bd->abcd", eye, eye)  # (o+, o-, i+, i-)
    return t.reshape(1, d**4, 1).astype(complex)


def _lifted_ops(x_op):
    # Operators on the fused (o+, o-, i+, i-) leg acting on the "1"
    # sub-legs only: X on o+, X^T on o- (bra side), identity on inputs.
    d = x_op.shape[0]
    eye_d = np.eye(d)
    eye_in = np.eye(d * d)
    xp = np.kron(np.kron(x_op, eye_d), eye_in)
    xm = np.kron(np.kron(eye_d, x_op.T), eye_in)
    return xp, xm


def gif_rhs_mpo(baths, n_steps, d, gamma=None):
    """MPO for the lambda derivative of the generalized influence functional.

    ``baths`` is a sequence of ``(EtaTable, X)`` pairs with X the coupling
    operator in the simulation basis.  The returned MPO acts on sites
    1..N+1 of the grown chain: per bath, the lag couplings of the new step
    accumulate along a dedicated bond channel and meet the new site's
    forward-minus-backward factor there; the self-coupling of the new step
    composes both factors on the final site.  Bond extent is
    1 + len(baths); identities act on all input sub-legs.

    With ``gamma`` set the MPO realizes Id + gamma * B instead of the
    derivative operator B itself (used by the factored RK4 form).
    """
    if not baths:
        raise ValueError("need at least one bath")
    n_new = n_steps + 1
    nb = len(baths)
    d4 = d**4
    eye4 = np.eye(d4, dtype=complex)
    affine = gamma is not None
    g = 1.0 if gamma is None else gamma
    cs = []  # cs[l][k-1]: coupling factor of bath l at step k = 1..n_new
    ds = []
    for eta, x_op in baths:
        x_op = np.asarray(x_op, dtype=complex)
        if x_op.shape != (d, d):
            raise ValueError(f"coupling operator shape {x_op.shape}, expected ({d}, {d})")
        if np.max(np.abs(x_op - x_op.conj().T)) > 1e-12:
            raise ValueError("coupling operator must be Hermitian to 1e-12")
        row = eta.row(n_new)
        xp, xm = _lifted_ops(x_op)
        ds.append(xp - xm)
        cs.append([-(row[k] * xp - np.conj(row[k]) * xm) for k in range(1, n_new + 1)])

    closing = sum(ds[l] @ cs[l][n_new - 1] for l in range(nb))
    if affine:
        closing = eye4 + g * closing
    if n_new == 1:
        return MPO((closing.reshape(1, d4, d4, 1),))

    sites = []
    first = np.zeros((1, d4, d4, 1 + nb), dtype=complex)
    first[0, :, :, 0] = eye4
    for l in range(nb):
        first[0, :, :, 1 + l] = cs[l][0]
    sites.append(first)
    for k in range(2, n_new):
        w = np.zeros((1 + nb, d4, d4, 1 + nb), dtype=complex)
        w[0, :, :, 0] = eye4
        for l in range(nb):
            w[0, :, :, 1 + l] = cs[l][k - 1]
            w[1 + l, :, :, 1 + l] = eye4
        sites.append(w)
    last = np.zeros((1 + nb, d4, d4, 1), dtype=complex)
    last[0, :, :, 0] = closing
    for l in range(nb):
        last[1 + l, :, :, 0] = g * ds[l]
    sites.append(last)
    return MPO(tuple(sites))


def gif_init(d, bath_labels=()):
    """Zero-step generalized influence functional."""
    if d < 2:
        raise ValueError("basis dimension must be >= 2")
    return GeneralizedIF(None, d, 0, tuple(bath_labels))


def grow_gif(current, baths, integ):
    """Extend a generalized influence functional by one step.

    Appends the new site in the identity-channel configuration (delta
    couplings between the new output legs and the new input legs, the
    lambda = 0 state) and integrates the closed equation of motion over
    lambda in [0, 1], compressing per the integrator's policy after each
    stage combination.
    """
    d = current.basis_dim
    site = _identity_channel_site(d)
    if current.n_steps == 0:
        grown = MPS((site,))
    else:
        grown = mps_append_site(current.mps, site)
    new_mps, dw = _integrate_lambda(
        grown, lambda gamma: gif_rhs_mpo(baths, current.n_steps, d, gamma), integ
    )
    return replace(
        current,
        mps=new_mps,
        n_steps=current.n_steps + 1,
        discarded=math.hypot(current.discarded, dw),
    )


def brute_force_gif(baths, n_steps, basis):
    """Dense generalized influence functional by explicit path summation.

    Single bath: the literal sum over diagonal-basis insertions at each
    step (exact).  Several baths: the per-step bath factors are inserted
    sequentially (first bath adjacent to the output legs), i.e. the dense
    object corresponds to a per-step splitting of the bath propagators;
    oracle use only.  Output legs are fused d^4 per site, ordered
    (s+_{k,1}, s-_{k,1}, s+_{k-1,2}, s-_{k-1,2}).
    """
    basis = np.asarray(basis, dtype=complex)
    d = basis.shape[0]
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if (d ** (4 * n_steps)) > _SIZE_GUARD:
        raise ValueError(
            f"dense generalized influence functional would hold "
            f"{d ** (4 * n_steps)} entries (guard {_SIZE_GUARD})"
        )
    nb = len(baths)
    d2 = d * d
    cdim = d2**nb

    overlaps = []  # <s_i | x_a> per bath
    evals = []
    vecs = []
    for eta, x_op in baths:
        ev, v = np.linalg.eigh(np.asarray(x_op, dtype=complex))
        evals.append(ev)
        vecs.append(v)
        overlaps.append(basis.conj().T @ v)
    links = [vecs[l].conj().T @ vecs[l + 1] for l in range(nb - 1)]

    # per-site factor S[c, leg] over the fused bath config c and fused leg
    s_fac = np.zeros((cdim, d**4), dtype=complex)
    for c in range(cdim):
        digits = []
        rest = c
        for _ in range(nb):
            digits.append(rest % d2)
            rest //= d2
        digits = digits[::-1]  # digits[l] = a_l * d + b_l, bath 0 outermost
        a = [dg // d for dg in digits]
        b = [dg % d for dg in digits]
        fwd_link = 1.0 + 0.0j
        bwd_link = 1.0 + 0.0j
        for l in range(nb - 1):
            fwd_link *= links[l][a[l], a[l + 1]]
            bwd_link *= np.conj(links[l][b[l], b[l + 1]])
        for o_p in range(d):
            for o_m in range(d):
                for i_p in range(d):
                    for i_m in range(d):
                        leg = ((o_p * d + o_m) * d + i_p) * d + i_m
                        val = (
                            overlaps[0][o_p, a[0]]
                            * np.conj(overlaps[nb - 1][i_p, a[nb - 1]])
                            * overlaps[nb - 1][i_m, b[nb - 1]]
                            * np.conj(overlaps[0][o_m, b[0]])
                        )
                        s_fac[c, leg] = val * fwd_link * bwd_link

    # influence phases: per bath, the quadratic form over its own x path
    # (steps 1..N), lifted to the combined config axis
    def bath_phase(l):
        xp, xm = _pair_values(evals[l])
        dz = xp - xm
        eta = baths[l][0]
        F = np.zeros((d2,) * n_steps, dtype=complex)

        def on_axis(vec, axis):
            s = [1] * n_steps
            s[axis] = d2
            return vec.reshape(s)

        for k in range(1, n_steps + 1):
            for kp in range(1, k + 1):
                e = eta.eta(k, kp)
                if e == 0:
                    continue
                bb = e * xp - np.conj(e) * xm
                if kp == k:
                    F += on_axis(dz * bb, k - 1)
                else:
                    F += on_axis(dz.astype(complex), k - 1) * on_axis(bb, kp - 1)
        return F

    total = np.zeros((cdim,) * n_steps, dtype=complex)
    for l in range(nb):
        comp = (np.arange(cdim) // (d2 ** (nb - 1 - l))) % d2
        total += bath_phase(l)[np.ix_(*([comp] * n_steps))]
    weights = np.exp(-total)

    out = weights
    for _ in range(n_steps):
        out = np.tensordot(out, s_fac, axes=[[0], [0]])
    return out


def build_diagonal_if(eta, eigenvalues, n_steps, policy, integ=None):
    """Grow a diagonal influence functional to ``n_steps`` from scratch."""
    ifn = diagonal_if_init(eigenvalues)
    for _ in range(n_steps):
        if integ is None:
            ifn = grow_influence_diagonal(ifn, eta, policy)
        else:
            ifn = grow_influence_ode(ifn, eta, integ)
    return ifn


def build_gif(baths, n_steps, d, integ, bath_labels=()):
    """Grow a generalized influence functional to ``n_steps`` from scratch."""
    g = gif_init(d, bath_labels)
    for _ in range(n_steps):
        g = grow_gif(g, baths, integ)
    return g


def save_gif(gif, path, key=""):
    """Write a GeneralizedIF to a versioned .npz container."""
    payload = {
        "version": np.int64(GIF_FILE_VERSION),
        "basis_dim": np.int64(gif.basis_dim),
        "n_steps": np.int64(gif.n_steps),
        "bath_labels": np.array(list(gif.bath_labels), dtype=str),
        "discarded": np.float64(gif.discarded),
        "key": np.array(key, dtype=str),
    }
    if gif.n_steps > 0:
        for j, site in enumerate(gif.mps.sites):
            payload[f"site_{j:05d}"] = site
    np.savez(path, **payload)


def load_gif(path):
    """Read a GeneralizedIF written by ``save_gif``; returns (gif, key)."""
    with np.load(path) as data:
        version = int(data["version"])
        if version != GIF_FILE_VERSION:
            raise ValueError(f"unsupported influence container version {version}")
        n_steps = int(data["n_steps"])
        sites = tuple(data[f"site_{j:05d}"] for j in range(n_steps))
        gif = GeneralizedIF(
            MPS(sites) if n_steps else None,
            int(data["basis_dim"]),
            n_steps,
            tuple(str(s) for s in data["bath_labels"]),
            float(data["discarded"]),
        )
        return gif, str(data["key"])

"""Fixed-size dense eigensolvers used by the rotation solvers.

Real-symmetric and complex-Hermitian 4x4 eigendecomposition via the cyclic
Jacobi method, plus a closed-form 2x2 complex SVD. All routines broadcast
over leading batch dimensions and are pure numpy arithmetic, so results are
bit-reproducible and independent of how inputs are batched: a matrix's
rotation sequence depends only on its own entries.
"""

from __future__ import annotations

import numpy as np

from .errors import NonConvergence
from .quat import Array

JACOBI_TOL = 1e-13
MAX_SWEEPS = 50

_PIVOTS4 = [(p, q) for p in range(4) for q in range(p + 1, 4)]


def _off_norm_sq(A: Array) -> Array:
    """Squared Frobenius norm of the off-diagonal part (summed directly so
    tiny values survive; a total-minus-diagonal difference would cancel)."""
    n = A.shape[-1]
    mag = np.abs(A) ** 2
    mask = ~np.eye(n, dtype=bool)
    return (mag * mask).sum(axis=(-1, -2))


def _rotation_params(app: Array, aqq: Array, beta: Array, do: Array):
    """Jacobi angle for the 2x2 symmetric core [[app, beta], [beta, aqq]].

    Returns (c, s, t) zeroed where `do` is False so masked lanes apply the
    identity rotation. The smaller-angle root keeps convergence quadratic.
    """
    safe = np.where(do, beta, 1.0)
    with np.errstate(over="ignore", divide="ignore"):
        # tau may overflow to inf for denormal pivots; t then degrades to 0
        tau = (aqq - app) / (2.0 * safe)
        sgn = np.where(tau >= 0.0, 1.0, -1.0)
        t = -sgn / (np.abs(tau) + np.sqrt(1.0 + tau * tau))
    t = np.where(do, t, 0.0)
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    return c, s, t


def _sort_ascending(vals: Array, vecs: Array):
    order = np.argsort(vals, axis=-1, kind="stable")
    vals = np.take_along_axis(vals, order, axis=-1)
    vecs = np.take_along_axis(vecs, order[..., None, :], axis=-1)
    return vals, vecs


def _canonical_sign_real(vecs: Array) -> Array:
    """Flip each eigenvector so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vecs), axis=-2)
    lead = np.take_along_axis(vecs, idx[..., None, :], axis=-2)
    s = np.where(lead < 0.0, -1.0, 1.0)
    return vecs * s


def _canonical_phase(vecs: Array) -> Array:
    """Rotate each eigenvector's phase so its largest entry is real positive."""
    idx = np.argmax(np.abs(vecs), axis=-2)
    lead = np.take_along_axis(vecs, idx[..., None, :], axis=-2)
    mag = np.abs(lead)
    phase = np.where(mag > 0.0, lead / np.where(mag > 0.0, mag, 1.0), 1.0)
    return vecs * np.conj(phase)


def _check_square(A, n: int, dtype) -> Array:
    A = np.asarray(A, dtype=dtype)
    if A.shape[-2:] != (n, n):
        raise ValueError(f"expected trailing shape ({n}, {n}), got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return A


def eigh_sym4(a, tol: float = JACOBI_TOL, max_sweeps: int = MAX_SWEEPS):
    """Eigendecomposition of symmetric 4x4 matrices by cyclic Jacobi.

    Returns (values, vectors) with values ascending and vectors[..., :, k]
    the orthonormal eigenvector of values[..., k], sign-canonicalized.
    Raises NonConvergence if the off-diagonal norm has not dropped below
    tol * ||A||_F after max_sweeps sweeps.
    """
    A = _check_square(a, 4, np.float64).copy()
    if np.any(A != np.swapaxes(A, -1, -2)):
        raise ValueError("matrix must be exactly symmetric")
    batch = A.shape[:-2]
    V = np.broadcast_to(np.eye(4), batch + (4, 4)).copy()
    scale_sq = np.maximum((A * A).sum(axis=(-1, -2)), 1e-300)
    thresh_sq = (tol * tol) * scale_sq

    converged = _off_norm_sq(A) <= thresh_sq
    for _ in range(max_sweeps):
        if np.all(converged):
            break
        active = ~converged
        for p, q in _PIVOTS4:
            apq = A[..., p, q]
            do = active & (apq != 0.0)
            if not np.any(do):
                continue
            app = A[..., p, p]
            aqq = A[..., q, q]
            c, s, t = _rotation_params(app, aqq, apq, do)
            A[..., p, p] = app + t * apq
            A[..., q, q] = aqq - t * apq
            A[..., p, q] = np.where(do, 0.0, apq)
            A[..., q, p] = A[..., p, q]
            for k in range(4):
                if k == p or k == q:
                    continue
                akp = A[..., k, p].copy()
                akq = A[..., k, q].copy()
                A[..., k, p] = c * akp + s * akq
                A[..., k, q] = -s * akp + c * akq
                A[..., p, k] = A[..., k, p]
                A[..., q, k] = A[..., k, q]
            vp = V[..., :, p].copy()
            vq = V[..., :, q]
            V[..., :, p] = c[..., None] * vp + s[..., None] * vq
            V[..., :, q] = -s[..., None] * vp + c[..., None] * vq
        converged = _off_norm_sq(A) <= thresh_sq
    else:
        if not np.all(converged):
            raise NonConvergence(
                f"{int(np.sum(~converged))} matrix(es) above tolerance "
                f"after {max_sweeps} Jacobi sweeps"
            )

    vals = np.einsum("...ii->...i", A).copy()
    vals, V = _sort_ascending(vals, V)
    return vals, _canonical_sign_real(V)


def eigh_herm4(a, tol: float = JACOBI_TOL, max_sweeps: int = MAX_SWEEPS):
    """Eigendecomposition of Hermitian 4x4 matrices by cyclic Jacobi.

    As eigh_sym4, with complex orthonormal eigenvectors whose phase is
    normalized so the largest-magnitude entry is real positive.
    """
    A = _check_square(a, 4, np.complex128).copy()
    if np.any(A != np.conj(np.swapaxes(A, -1, -2))):
        raise ValueError("matrix must be exactly Hermitian")
    batch = A.shape[:-2]
    V = np.broadcast_to(np.eye(4, dtype=np.complex128), batch + (4, 4)).copy()
    scale_sq = np.maximum((np.abs(A) ** 2).sum(axis=(-1, -2)), 1e-300)
    thresh_sq = (tol * tol) * scale_sq

    converged = _off_norm_sq(A) <= thresh_sq
    for _ in range(max_sweeps):
        if np.all(converged):
            break
        active = ~converged
        for p, q in _PIVOTS4:
            apq = A[..., p, q]
            beta = np.abs(apq)
            do = active & (beta != 0.0)
            if not np.any(do):
                continue
            phase = np.where(do, apq, 1.0) / np.where(do, beta, 1.0)
            app = A[..., p, p].real
            aqq = A[..., q, q].real
            c, s, t = _rotation_params(app, aqq, beta, do)
            A[..., p, p] = app + t * beta
            A[..., q, q] = aqq - t * beta
            A[..., p, q] = np.where(do, 0.0, apq)
            A[..., q, p] = np.conj(A[..., p, q])
            pc = np.conj(phase)
            for k in range(4):
                if k == p or k == q:
                    continue
                akp = A[..., k, p].copy()
                akq = A[..., k, q].copy()
                A[..., k, p] = c * akp + (pc * s) * akq
                A[..., k, q] = -s * akp + (pc * c) * akq
                A[..., p, k] = np.conj(A[..., k, p])
                A[..., q, k] = np.conj(A[..., k, q])
            vp = V[..., :, p].copy()
            vq = V[..., :, q]
            V[..., :, p] = c[..., None] * vp + (pc * s)[..., None] * vq
            V[..., :, q] = -s[..., None] * vp + (pc * c)[..., None] * vq
        converged = _off_norm_sq(A) <= thresh_sq
    else:
        if not np.all(converged):
            raise NonConvergence(
                f"{int(np.sum(~converged))} matrix(es) above tolerance "
                f"after {max_sweeps} Jacobi sweeps"
            )

    vals = np.einsum("...ii->...i", A).real.copy()
    vals, V = _sort_ascending(vals, V)
    return vals, _canonical_phase(V)


def _eigh_herm2_max(H11: Array, H22: Array, H12: Array):
    """Largest eigenpair of the 2x2 Hermitian [[H11, H12], [conj(H12), H22]].

    H11, H22 real. Returns (lam_max, v) with v a unit 2-vector, batched.
    """
    mid = 0.5 * (H11 + H22)
    d = 0.5 * (H11 - H22)
    r = np.hypot(d, np.abs(H12))
    lam = mid + r
    # (H - lam I) v = 0: rows give two candidate null vectors; pick the
    # better-conditioned one.
    v_a = np.stack([H12, lam - H11], axis=-1)
    v_b = np.stack([lam - H22 + 0j, np.conj(H12)], axis=-1)
    na = np.sqrt((np.abs(v_a) ** 2).sum(axis=-1))
    nb = np.sqrt((np.abs(v_b) ** 2).sum(axis=-1))
    v = np.where((na >= nb)[..., None], v_a, v_b)
    n = np.maximum(np.maximum(na, nb), 1e-300)
    v = v / n[..., None]
    # fully degenerate block: any unit vector is an eigenvector
    iso = (na == 0.0) & (nb == 0.0)
    if np.any(iso):
        v = np.where(iso[..., None], np.array([1.0 + 0j, 0j]), v)
    return lam, v


def svd_c2(m):
    """Closed-form SVD of 2x2 complex matrices: M = U diag(sigma) V^H.

    Singular values descend; U, V are unitary. The large singular pair comes
    from the Hermitian eigenproblem of M^H M, the small one from the exact
    orthogonal complement, which keeps the reconstruction residual at the
    level of ||M|| rounding even for rank-deficient inputs.
    """
    M = _check_square(m, 2, np.complex128)
    MhM = np.conj(np.swapaxes(M, -1, -2)) @ M
    lam1, v1 = _eigh_herm2_max(MhM[..., 0, 0].real, MhM[..., 1, 1].real, MhM[..., 0, 1])
    sigma1 = np.sqrt(np.maximum(lam1, 0.0))

    # exact unitary completion of the right factor
    v2 = np.stack([-np.conj(v1[..., 1]), np.conj(v1[..., 0])], axis=-1)

    s1_safe = np.where(sigma1 > 0.0, sigma1, 1.0)
    u1 = np.einsum("...ij,...j->...i", M, v1) / s1_safe[..., None]
    nu1 = np.sqrt((np.abs(u1) ** 2).sum(axis=-1))
    u1 = np.where(
        (nu1 > 0.0)[..., None], u1 / np.maximum(nu1, 1e-300)[..., None],
        np.array([1.0 + 0j, 0j]),
    )
    u1 = np.where((sigma1 > 0.0)[..., None], u1, np.array([1.0 + 0j, 0j]))

    w2 = np.einsum("...ij,...j->...i", M, v2)
    w2 = w2 - np.sum(np.conj(u1) * w2, axis=-1)[..., None] * u1
    sigma2 = np.sqrt((np.abs(w2) ** 2).sum(axis=-1))
    u2 = np.stack([-np.conj(u1[..., 1]), np.conj(u1[..., 0])], axis=-1)
    good = sigma2 > 0.0
    u2 = np.where(good[..., None], w2 / np.maximum(sigma2, 1e-300)[..., None], u2)
    sigma2 = np.minimum(sigma2, sigma1)

    U = np.stack([u1, u2], axis=-1)
    Vh = np.conj(np.stack([v1, v2], axis=-1)).swapaxes(-1, -2)
    sigma = np.stack([sigma1, sigma2], axis=-1)
    return U, sigma, Vh

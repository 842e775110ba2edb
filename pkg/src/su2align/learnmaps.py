"""Differentiable rotation-representation maps with analytic backward passes.

Two families:

- twovec: a 6D vector read as target x and y axes, mapped to the rotation
  matrix that optimally balances the two axis errors (not a greedy
  Gram-Schmidt step).
- quadmobius: a 16D vector assembled into a Hermitian 4x4; its smallest
  eigenvector, reshaped to a Moebius transform, is projected to SU(2)
  either through the polar factor ("svd") or algebraically ("alg").

Forward passes return (output, cache); backward passes consume the cache
(or recompute it) and return gradients with respect to the raw 6/16 real
inputs. Gradients follow the real-pair convention (dL/dRe + i dL/dIm) and
are validated against central finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateAlgebraic, DegenerateAxes, EigGapTooSmall, SingularMobius
from .linalg4 import eigh_herm4, svd_c2
from .quat import Array, quat_canonical

EIG_GAP_TOL = 1e-10  # relative to ||G||_F
DET_TOL = 1e-12
ALG_NORM_TOL = 1e-12
PINV_CUTOFF = 1e-12

_SQRT2 = np.sqrt(2.0)


def _norm(v):
    return np.sqrt(np.sum(v * v, axis=-1))


def _dot(u, v):
    return np.sum(u * v, axis=-1)


# ---------------------------------------------------------------------------
# twovec: 6D -> SO(3)

def _twovec_parts(v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != 6:
        raise ValueError(f"expected trailing dimension 6, got shape {v.shape}")
    bx = v[..., :3]
    by = v[..., 3:]
    nx = _norm(bx)
    ny = _norm(by)
    if np.any(nx <= 1e-12) or np.any(ny <= 1e-12):
        raise DegenerateAxes("axis prediction is numerically zero")
    byp = (nx / ny)[..., None] * by
    u = bx + byp
    w = bx - byp
    nu = _norm(u)
    nw = _norm(w)
    if np.any(nu <= 1e-9 * nx) or np.any(nw <= 1e-9 * nx):
        raise DegenerateAxes("axis predictions are numerically parallel")
    return bx, by, nx, ny, byp, u, w, nu, nw


def twovec_forward(v) -> Array:
    """Rotation matrix from 6D input; columns 1-2 split the error between
    both predicted axes evenly. Invariant to positive rescaling of either
    axis separately."""
    _, _, _, _, _, u, w, nu, nw = _twovec_parts(v)
    bp = u / nu[..., None]
    bm = w / nw[..., None]
    R = np.stack(
        [(bp + bm) / _SQRT2, (bp - bm) / _SQRT2, np.cross(bm, bp)], axis=-1
    )
    return R


def twovec_backward(v, dL_dR) -> Array:
    """Gradient of a scalar loss through twovec_forward w.r.t. the 6 inputs."""
    bx, by, nx, ny, byp, u, w, nu, nw = _twovec_parts(v)
    dL_dR = np.asarray(dL_dR, dtype=np.float64)
    bp = u / nu[..., None]
    bm = w / nw[..., None]
    g1 = dL_dR[..., :, 0]
    g2 = dL_dR[..., :, 1]
    g3 = dL_dR[..., :, 2]
    g_bp = (g1 + g2) / _SQRT2 + np.cross(g3, bm)
    g_bm = (g1 - g2) / _SQRT2 + np.cross(bp, g3)
    g_u = (g_bp - _dot(bp, g_bp)[..., None] * bp) / nu[..., None]
    g_w = (g_bm - _dot(bm, g_bm)[..., None] * bm) / nw[..., None]
    g_bx = g_u + g_w
    g_byp = g_u - g_w
    g_by = (nx / ny)[..., None] * g_byp
    t = _dot(by, g_byp)
    g_nx = t / ny
    g_ny = -t * nx / (ny * ny)
    g_bx = g_bx + (g_nx / nx)[..., None] * bx
    g_by = g_by + (g_ny / ny)[..., None] * by
    return np.concatenate([g_bx, g_by], axis=-1)


# ---------------------------------------------------------------------------
# quadmobius: 16D -> unit quaternion

# theta index (0-based) -> (row, col, kind); kind 0 real diag, 1 real off, 2 imag off
_THETA_LAYOUT = [
    (0, 0, 0), (0, 1, 1), (0, 1, 2), (0, 2, 1), (0, 2, 2), (0, 3, 1), (0, 3, 2),
    (1, 1, 0), (1, 2, 1), (1, 2, 2), (1, 3, 1), (1, 3, 2),
    (2, 2, 0), (2, 3, 1), (2, 3, 2),
    (3, 3, 0),
]


def quadmobius_assemble(theta) -> Array:
    """Arrange 16 reals into the Hermitian 4x4 (upper-triangle layout)."""
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape[-1] != 16:
        raise ValueError(f"expected trailing dimension 16, got shape {theta.shape}")
    G = np.zeros(theta.shape[:-1] + (4, 4), dtype=np.complex128)
    for k, (i, j, kind) in enumerate(_THETA_LAYOUT):
        t = theta[..., k]
        if kind == 0:
            G[..., i, j] += t
        elif kind == 1:
            G[..., i, j] += t
            G[..., j, i] += t
        else:
            G[..., i, j] += 1j * t
            G[..., j, i] += -1j * t
    return G


def quadmobius_extract(G) -> Array:
    """Inverse of quadmobius_assemble (reads the upper triangle)."""
    G = np.asarray(G, dtype=np.complex128)
    parts = []
    for i, j, kind in _THETA_LAYOUT:
        if kind == 0:
            parts.append(G[..., i, j].real)
        elif kind == 1:
            parts.append(G[..., i, j].real)
        else:
            parts.append(G[..., i, j].imag)
    return np.stack(parts, axis=-1)


@dataclass(frozen=True)
class QuadMobiusCache:
    """Forward intermediates reused by the backward pass."""

    variant: str
    vals: Array
    vecs: Array
    M: Array
    det: Array
    p4: Array      # unnormalized real 4-vector of (alpha, beta)
    n4: Array      # its norm
    sign: Array    # canonicalization sign applied to the output
    q: Array
    U: Array = None  # type: ignore[assignment]  # svd variant only
    sigma: Array = None  # type: ignore[assignment]
    Vh: Array = None  # type: ignore[assignment]
    W: Array = None  # type: ignore[assignment]
    r: Array = None  # type: ignore[assignment]  # sqrt(det W)


def _frame_fix_raw(q):
    return np.stack([q[..., 0], -q[..., 3], q[..., 2], q[..., 1]], axis=-1)


def _canonical_sign(q):
    s = np.sign(q[..., 0])
    for k in (1, 2, 3):
        s = np.where(s == 0.0, np.sign(q[..., k]), s)
    return np.where(s == 0.0, 1.0, s)


def quadmobius_forward(theta, variant: str = "svd"):
    """Map 16 reals to a unit quaternion. Returns (q, cache).

    variant "svd": scaled polar factor of M (nearest unitary with the
    determinant phase folded in). variant "alg": algebraic SU(2) parameters
    of the det-normalized M*. The two agree on every valid input.

    Raises EigGapTooSmall / SingularMobius / DegenerateAlgebraic when the
    named precondition fails; no silent clamping.
    """
    if variant not in ("svd", "alg"):
        raise ValueError(f"unknown variant {variant!r}")
    G = quadmobius_assemble(theta)
    vals, vecs = eigh_herm4(G)
    scale = np.sqrt((np.abs(G) ** 2).sum(axis=(-1, -2)))
    gap = vals[..., 1] - vals[..., 0]
    if np.any(gap <= EIG_GAP_TOL * np.maximum(scale, 1e-300)):
        raise EigGapTooSmall("smallest eigenvalue of the assembled matrix is not simple")
    m = vecs[..., :, 0]
    M = m.reshape(m.shape[:-1] + (2, 2))
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    if np.any(np.abs(det) < DET_TOL):
        raise SingularMobius("reshaped Moebius transform is numerically singular")

    extra = {}
    if variant == "svd":
        U, sigma, Vh = svd_c2(M)
        W = U @ Vh
        detW = W[..., 0, 0] * W[..., 1, 1] - W[..., 0, 1] * W[..., 1, 0]
        r = np.sqrt(detW)
        alpha = np.conj(r) * W[..., 0, 0]
        beta = np.conj(r) * W[..., 0, 1]
        extra = dict(U=U, sigma=sigma, Vh=Vh, W=W, r=r)
    else:
        Mstar = M / np.sqrt(det)[..., None, None]
        alpha = Mstar[..., 0, 0] + np.conj(Mstar[..., 1, 1])
        beta = Mstar[..., 0, 1] - np.conj(Mstar[..., 1, 0])
        if np.any(alpha.real**2 + alpha.imag**2 + beta.real**2 + beta.imag**2 <= ALG_NORM_TOL):
            raise DegenerateAlgebraic("unnormalized SU(2) parameters vanished")

    p4 = np.stack([alpha.real, alpha.imag, beta.real, beta.imag], axis=-1)
    n4 = _norm(p4)
    q_fixed = _frame_fix_raw(p4 / n4[..., None])
    sign = _canonical_sign(q_fixed)
    q = q_fixed * sign[..., None]
    cache = QuadMobiusCache(
        variant=variant, vals=vals, vecs=vecs, M=M, det=det,
        p4=p4, n4=n4, sign=sign, q=q, **extra,
    )
    return q, cache


def _det_grad_entries(M):
    """d det / d M_ij as a 2x2 array (the adjugate transpose)."""
    out = np.empty_like(M)
    out[..., 0, 0] = M[..., 1, 1]
    out[..., 0, 1] = -M[..., 1, 0]
    out[..., 1, 0] = -M[..., 0, 1]
    out[..., 1, 1] = M[..., 0, 0]
    return out


def quadmobius_backward(theta, dL_dq, variant: str = "svd", cache: QuadMobiusCache = None):
    """Gradient of a scalar loss through quadmobius_forward w.r.t. theta.

    Chains the eigenvector derivative (pseudoinverse of (lambda I - G)
    restricted to the orthogonal complement) with the SU(2) projection of
    the chosen variant; the Hermitian parameter repetition doubles the
    off-diagonal entries.
    """
    if cache is None:
        _, cache = quadmobius_forward(theta, variant)
    elif cache.variant != variant:
        raise ValueError("cache variant does not match requested variant")
    dL_dq = np.asarray(dL_dq, dtype=np.float64)

    # undo canonicalization sign, then the frame-fix permutation
    g = dL_dq * cache.sign[..., None]
    g_rawq = np.stack([g[..., 0], g[..., 3], g[..., 2], -g[..., 1]], axis=-1)
    # normalization p4 / ||p4||
    qn = cache.p4 / cache.n4[..., None]
    g_p4 = (g_rawq - _dot(qn, g_rawq)[..., None] * qn) / cache.n4[..., None]
    g_alpha = g_p4[..., 0] + 1j * g_p4[..., 1]
    g_beta = g_p4[..., 2] + 1j * g_p4[..., 3]

    if variant == "svd":
        W, r = cache.W, cache.r
        # alpha = conj(r) W00, beta = conj(r) W01
        T = np.conj(g_alpha) * W[..., 0, 0] + np.conj(g_beta) * W[..., 0, 1]
        g_W = np.zeros_like(W)
        g_W[..., 0, 0] = g_alpha * r
        g_W[..., 0, 1] = g_beta * r
        g_W += T[..., None, None] * np.conj(_det_grad_entries(W) / (2.0 * r)[..., None, None])
        # polar-factor adjoint: dW = U ((U^H dM V - V^H dM^H U) / S) V^H
        U, Vh = cache.U, cache.Vh
        S = cache.sigma[..., :, None] + cache.sigma[..., None, :]
        H = (np.conj(np.swapaxes(U, -1, -2)) @ g_W @ np.conj(np.swapaxes(Vh, -1, -2))) / S
        g_M = U @ (H - np.conj(np.swapaxes(H, -1, -2))) @ Vh
    else:
        det = cache.det
        c = det ** (-0.5)
        Mstar = cache.M * c[..., None, None]
        g_Ms = np.zeros_like(cache.M)
        g_Ms[..., 0, 0] = g_alpha
        g_Ms[..., 1, 1] = np.conj(g_alpha)
        g_Ms[..., 0, 1] = g_beta
        g_Ms[..., 1, 0] = -np.conj(g_beta)
        T2 = np.sum(np.conj(g_Ms) * cache.M, axis=(-1, -2))
        g_M = g_Ms * np.conj(c)[..., None, None] + np.conj(
            (-0.5) * (T2 * det ** (-1.5))[..., None, None] * _det_grad_entries(cache.M)
        )

    g_v = g_M.reshape(g_M.shape[:-2] + (4,))

    # eigenvector derivative: dv = (lambda I - G)^+ (dG) v
    vals, vecs, v = cache.vals, cache.vecs, cache.vecs[..., :, 0]
    lam = vals[..., 0]
    gaps = lam[..., None] - vals[..., 1:]
    cutoff = PINV_CUTOFF * np.maximum(np.abs(vals).max(axis=-1), 1e-300)
    inv = np.where(np.abs(gaps) > cutoff[..., None], 1.0 / gaps, 0.0)
    others = vecs[..., :, 1:]
    P = np.einsum("...ik,...k,...jk->...ij", others, inv, np.conj(others))
    N = np.einsum("...i,...j,...jk->...ik", v, np.conj(g_v), P)

    grad = np.empty(g_v.shape[:-1] + (16,))
    for k, (i, j, kind) in enumerate(_THETA_LAYOUT):
        if kind == 0:
            grad[..., k] = N[..., i, i].real
        elif kind == 1:
            grad[..., k] = N[..., i, j].real + N[..., j, i].real
        else:
            grad[..., k] = N[..., i, j].imag - N[..., j, i].imag
    return grad

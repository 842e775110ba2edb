"""Batch solvers for the weighted vector-alignment problem.

Four routes to the optimal (or approximate) rotation:

- solve_davenport: eigenvector of the classic 4x4 gain matrix K for the
  largest eigenvalue; the reference oracle.
- solve_GP: stereographic-plane constraints; two real rows per pair
  accumulate into G_P, smallest eigenvector, then the frame fix.
- solve_GS: skew 4x4 constraints acting on 3D vectors directly; smallest
  eigenvector of G_S, no frame fix.
- solve_GM: relaxed Moebius least squares (Hermitian G_M), projected back
  to SU(2) through the polar factor; approximate under noise.

Every solver has a `_batch` variant operating on stacked inputs; the
scalar API wraps it. All math is elementwise or per-instance reductions,
so results for one instance do not depend on what else sits in the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularMobius
from .linalg4 import eigh_herm4, eigh_sym4, svd_c2
from .projective import as_projective, stereo_project
from .quat import (
    Array,
    ObservationSet,
    apply_frame_fix,
    quat_canonical,
    rotate_vec,
)

GM_DET_TOL = 1e-12


@dataclass(frozen=True)
class WahbaSolution:
    """Solver output: canonical unit quaternion, objective residual, and the
    eigen-gap ratio (gap to the nearest competing eigenvalue over the
    spectral spread; 0 means the optimum is not unique)."""

    q: Array
    residual: float
    condition: float


@dataclass(frozen=True)
class StereoObservationSet:
    """Weighted correspondences of complex rays (stereographic images).

    z_rays are reference projections, p_rays target projections, shape
    (n, 2) complex. Plane coordinates embed as [z, 1]; the projection pole
    is [1, 0].
    """

    z_rays: Array
    p_rays: Array
    weights: Array = None  # type: ignore[assignment]

    def __post_init__(self):
        z = as_projective(self.z_rays)
        p = as_projective(self.p_rays)
        if z.ndim != 2 or p.shape != z.shape:
            raise ValueError("z_rays and p_rays must both have shape (n, 2)")
        if len(z) < 1:
            raise ValueError("at least one correspondence is required")
        w = np.ones(len(z)) if self.weights is None else np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(z),):
            raise ValueError("weights must have shape (n,)")
        if np.any(w < 1e-300):
            raise ValueError("weights must be positive (>= 1e-300)")
        for arr in (z, p, w):
            arr.flags.writeable = False
        object.__setattr__(self, "z_rays", z)
        object.__setattr__(self, "p_rays", p)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.z_rays)

    @classmethod
    def from_plane(cls, z, p, weights=None) -> "StereoObservationSet":
        """Build from complex plane coordinates (second ray component 1)."""
        z = np.asarray(z, dtype=np.complex128)
        p = np.asarray(p, dtype=np.complex128)
        ones = np.ones_like(z)
        return cls(np.stack([z, ones], -1), np.stack([p, ones], -1), weights)

    @classmethod
    def from_observations(cls, obs: ObservationSet) -> "StereoObservationSet":
        """Stereographically project a 3D observation set."""
        return cls(stereo_project(obs.refs), stereo_project(obs.targets), obs.weights)


def alignment_loss(q, refs, targets, weights) -> Array:
    """Weighted loss sum_i w_i ||b_i - R(q) a_i||^2 (batched)."""
    r = rotate_vec(np.asarray(q)[..., None, :], refs)
    return np.sum(weights * np.sum((targets - r) ** 2, axis=-1), axis=-1)


def _condition(vals: Array, extreme: str) -> Array:
    spread = vals[..., 3] - vals[..., 0]
    gap = vals[..., 1] - vals[..., 0] if extreme == "smallest" else vals[..., 3] - vals[..., 2]
    return np.where(spread > 0.0, gap / np.where(spread > 0.0, spread, 1.0), 0.0)


# ---------------------------------------------------------------------------
# Davenport's Q-method

def davenport_gain(refs, targets, weights) -> Array:
    """The symmetric 4x4 gain matrix K of the classic quaternion solution."""
    refs = np.asarray(refs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    B = np.einsum("...n,...ni,...nj->...ij", weights, targets, refs)
    zv = np.einsum("...n,...ni->...i", weights, np.cross(refs, targets))
    tr = np.einsum("...ii->...", B)
    K = np.empty(B.shape[:-2] + (4, 4))
    K[..., 0, 0] = tr
    K[..., 0, 1:] = zv
    K[..., 1:, 0] = zv
    K[..., 1:, 1:] = B + np.swapaxes(B, -1, -2)
    K[..., 1, 1] -= tr
    K[..., 2, 2] -= tr
    K[..., 3, 3] -= tr
    return K


def solve_davenport_batch(refs, targets, weights):
    """Vectorized Q-method. Returns (q, residual, condition)."""
    K = davenport_gain(refs, targets, weights)
    vals, vecs = eigh_sym4(K)
    q = quat_canonical(vecs[..., :, 3])
    wsum = np.asarray(weights, dtype=np.float64).sum(axis=-1)
    # Eq-level loss: sum w ||b - Ra||^2 = 2 (sum w - lambda_max)
    residual = 2.0 * (wsum - vals[..., 3])
    return q, residual, _condition(vals, "largest")


def solve_davenport(obs: ObservationSet) -> WahbaSolution:
    """Globally optimal rotation by Davenport's eigendecomposition."""
    q, res, cond = solve_davenport_batch(obs.refs, obs.targets, obs.weights)
    return WahbaSolution(q, float(res), float(cond))


# ---------------------------------------------------------------------------
# Stereographic-plane solver (G_P)

def build_D_row(z, p, w) -> Array:
    """Weighted 2x4 real constraint block for one plane correspondence.

    Rows are the real and imaginary parts of the linear SU(2) constraint,
    scaled by sqrt(4 w / ((1 + |z|^2)(1 + |p|^2))).
    """
    z = np.asarray(z, dtype=np.complex128)
    p = np.asarray(p, dtype=np.complex128)
    w = np.asarray(w, dtype=np.float64)
    x, y = z.real, z.imag
    m, n = p.real, p.imag
    f = 2.0 * np.sqrt(w) / (np.sqrt((x * x + y * y) + 1.0) * np.sqrt((m * m + n * n) + 1.0))
    D = np.empty(np.broadcast(x, m, w).shape + (2, 4))
    D[..., 0, 0] = x - m
    D[..., 0, 1] = -y - n
    D[..., 0, 2] = (m * x + 1.0) - n * y
    D[..., 0, 3] = m * y + n * x
    D[..., 1, 0] = y - n
    D[..., 1, 1] = x + m
    D[..., 1, 2] = m * y + n * x
    D[..., 1, 3] = (1.0 - m * x) + n * y
    return f[..., None, None] * D


def build_D_general(z_ray, p_ray, w) -> Array:
    """Weighted 2x4 real constraint block between two complex rays.

    Specializes exactly to build_D_row when both second components are 1,
    and stays finite and nonzero for points at infinity.
    """
    z = np.asarray(z_ray, dtype=np.complex128)
    p = np.asarray(p_ray, dtype=np.complex128)
    w = np.asarray(w, dtype=np.float64)
    x1, y1 = z[..., 0].real, z[..., 0].imag
    x2, y2 = z[..., 1].real, z[..., 1].imag
    m1, n1 = p[..., 0].real, p[..., 0].imag
    m2, n2 = p[..., 1].real, p[..., 1].imag
    nz = np.sqrt((x1 * x1 + y1 * y1) + (x2 * x2 + y2 * y2))
    np_ = np.sqrt((m1 * m1 + n1 * n1) + (m2 * m2 + n2 * n2))
    f = 2.0 * np.sqrt(w) / (nz * np_)
    D = np.empty(np.broadcast(x1, m1, w).shape + (2, 4))
    D[..., 0, 0] = ((m2 * x1 - m1 * x2) + n1 * y2) - n2 * y1
    D[..., 1, 0] = (m2 * y1 - m1 * y2) + n2 * x1 - n1 * x2
    D[..., 0, 1] = ((-m2 * y1 - m1 * y2) - n2 * x1) - n1 * x2
    D[..., 1, 1] = (m2 * x1 + m1 * x2) - n1 * y2 - n2 * y1
    D[..., 0, 2] = ((m1 * x1 + m2 * x2) - n1 * y1) - n2 * y2
    D[..., 1, 2] = ((m1 * y1 + m2 * y2) + n1 * x1) + n2 * x2
    D[..., 0, 3] = ((m1 * y1 - m2 * y2) + n1 * x1) - n2 * x2
    D[..., 1, 3] = ((m2 * x2 - m1 * x1) + n1 * y1) - n2 * y2
    return f[..., None, None] * D


def gp_gain(z_rays, p_rays, weights) -> Array:
    """Accumulate G_P = sum of D_i^T D_i over correspondences."""
    D = build_D_general(z_rays, p_rays, weights)
    return np.einsum("...nri,...nrj->...ij", D, D)


def solve_GP_batch(z_rays, p_rays, weights):
    """Vectorized stereographic solver. Returns (q, residual, condition)."""
    vals, vecs = eigh_sym4(gp_gain(z_rays, p_rays, weights))
    q = apply_frame_fix(vecs[..., :, 0])
    return q, vals[..., 0], _condition(vals, "smallest")


def solve_GP(sobs: StereoObservationSet) -> WahbaSolution:
    """Optimal rotation from stereographic correspondences; residual is the
    smallest eigenvalue of G_P and equals the alignment loss."""
    q, res, cond = solve_GP_batch(sobs.z_rays, sobs.p_rays, sobs.weights)
    return WahbaSolution(q, float(res), float(cond))


# ---------------------------------------------------------------------------
# 3D sphere solver (G_S)

def build_Q(a, b, w) -> Array:
    """Weighted skew-symmetric 4x4 constraint sqrt(w) Q for one 3D pair.

    Q q = 0 exactly when the rotation of q maps a to b; rank is at most 2
    when ||a|| = ||b||. Valid for any equal-magnitude pair, not just unit.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    x, y, z = a[..., 0], a[..., 1], a[..., 2]
    m, n, p = b[..., 0], b[..., 1], b[..., 2]
    Q = np.zeros(np.broadcast(x, m, w).shape + (4, 4))
    Q[..., 0, 1] = x - m
    Q[..., 0, 2] = y - n
    Q[..., 0, 3] = z - p
    Q[..., 1, 0] = m - x
    Q[..., 1, 2] = -z - p
    Q[..., 1, 3] = y + n
    Q[..., 2, 0] = n - y
    Q[..., 2, 1] = z + p
    Q[..., 2, 3] = -x - m
    Q[..., 3, 0] = p - z
    Q[..., 3, 1] = -y - n
    Q[..., 3, 2] = x + m
    return np.sqrt(w)[..., None, None] * Q


def gs_gain(refs, targets, weights) -> Array:
    """Accumulate G_S = sum_i w_i Q_i^T Q_i."""
    Q = build_Q(refs, targets, weights)
    return np.einsum("...nij,...nik->...jk", Q, Q)


def solve_GS_batch(refs, targets, weights):
    """Vectorized 3D-sphere solver. Returns (q, residual, condition)."""
    vals, vecs = eigh_sym4(gs_gain(refs, targets, weights))
    q = quat_canonical(vecs[..., :, 0])
    return q, vals[..., 0], _condition(vals, "smallest")


def solve_GS(obs: ObservationSet) -> WahbaSolution:
    """Optimal rotation acting on 3D vectors directly; no frame fix since
    the constraints live in the world frame."""
    q, res, cond = solve_GS_batch(obs.refs, obs.targets, obs.weights)
    return WahbaSolution(q, float(res), float(cond))


# ---------------------------------------------------------------------------
# Moebius approximation (G_M)

def build_Aprime_row(z, p) -> Array:
    """Unweighted complex constraint row [-z, -1, pz, p] on vec(M) for one
    plane correspondence; annihilated exactly when the Moebius transform M
    maps z to p."""
    z = np.asarray(z, dtype=np.complex128)
    p = np.asarray(p, dtype=np.complex128)
    return np.stack([-z, -np.ones_like(z), p * z, p], axis=-1)


def build_Aprime_general(z_ray, p_ray) -> Array:
    """General-ray form of build_Aprime_row: [-z1 p2, -z2 p2, p1 z1, p1 z2]."""
    z = np.asarray(z_ray, dtype=np.complex128)
    p = np.asarray(p_ray, dtype=np.complex128)
    z1, z2 = z[..., 0], z[..., 1]
    p1, p2 = p[..., 0], p[..., 1]
    return np.stack([-z1 * p2, -z2 * p2, p1 * z1, p1 * z2], axis=-1)


def gm_gain(z_rays, p_rays, weights) -> Array:
    """Accumulate the Hermitian G_M = sum_i w_i' A'_i^H A'_i.

    Rows are scaled by the same projective weight w_i' used by G_P so the
    two stereographic solvers weigh correspondences consistently.
    """
    z = np.asarray(z_rays, dtype=np.complex128)
    p = np.asarray(p_rays, dtype=np.complex128)
    w = np.asarray(weights, dtype=np.float64)
    rows = build_Aprime_general(z, p)
    nz2 = np.abs(z[..., 0]) ** 2 + np.abs(z[..., 1]) ** 2
    np2 = np.abs(p[..., 0]) ** 2 + np.abs(p[..., 1]) ** 2
    f = np.sqrt(4.0 * w / (nz2 * np2))
    rows = f[..., None] * rows
    return np.einsum("...ni,...nj->...ij", np.conj(rows), rows)


def su2_project(M):
    """Nearest-unitary projection with the determinant phase folded in:
    conj(sqrt(det(U V^H))) U V^H, special unitary for det-normalized input.

    Returns (alpha, beta) of the projected SU(2) matrix, batched.
    """
    U, _, Vh = svd_c2(M)
    W = U @ Vh
    detW = W[..., 0, 0] * W[..., 1, 1] - W[..., 0, 1] * W[..., 1, 0]
    s = np.conj(np.sqrt(detW))
    return s * W[..., 0, 0], s * W[..., 0, 1]


def solve_GM_batch(z_rays, p_rays, weights):
    """Vectorized Moebius solver. Returns (q, residual, condition, ok).

    `ok` is False where |det M| fell below GM_DET_TOL; those quaternions
    are placeholders and must be discarded by the caller.
    """
    vals, vecs = eigh_herm4(gm_gain(z_rays, p_rays, weights))
    m = vecs[..., :, 0]
    M = m.reshape(m.shape[:-1] + (2, 2))
    det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
    ok = np.abs(det) >= GM_DET_TOL
    safe_det = np.where(ok, det, 1.0)
    Mstar = M / np.sqrt(safe_det)[..., None, None]
    alpha, beta = su2_project(Mstar)
    q_raw = np.stack([alpha.real, alpha.imag, beta.real, beta.imag], axis=-1)
    nrm = np.sqrt(np.sum(q_raw * q_raw, axis=-1))
    q_raw = q_raw / np.where(nrm > 0.0, nrm, 1.0)[..., None]
    q = apply_frame_fix(q_raw)
    return q, vals[..., 0], _condition(vals, "smallest"), ok


def solve_GM(sobs: StereoObservationSet) -> WahbaSolution:
    """Approximate rotation via the best least-squares Moebius transform.

    Exact on noiseless data (the optimum then lies in the SU(2) subset);
    under noise the result is biased relative to the optimal solvers. The
    residual is the smallest eigenvalue of G_M, an algebraic quantity, not
    the alignment loss. The SU(2) factor returned is the nearest unitary
    matrix to the det-normalized M*, which is not necessarily the nearest
    special unitary matrix to M itself.
    """
    q, res, cond, ok = solve_GM_batch(sobs.z_rays, sobs.p_rays, sobs.weights)
    if not bool(ok):
        raise SingularMobius("estimated Moebius transform is numerically singular")
    return WahbaSolution(q, float(res), float(cond))

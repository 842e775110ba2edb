"""Core rotation representations and conversions.

Conventions used throughout the package:

- Quaternions are scalar-first float64 arrays ``[w, x, y, z]`` with the
  Hamilton multiplication convention (ij = k).  ``q`` and ``-q`` encode the
  same rotation; the canonical sign (w >= 0, ties broken by the first
  nonzero vector component) is enforced only at public API boundaries.
- SU(2) elements are 2x2 complex arrays ``[[alpha, beta], [-conj(beta),
  conj(alpha)]]`` with ``alpha = w + x i`` and ``beta = y + z i``.
- 3-vectors are float64 arrays of shape (..., 3); rotation matrices are
  (..., 3, 3) row-major.

All operations are pure functions over immutable values and broadcast over
leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray

UNIT_TOL = 1e-12
ROTMAT_TOL = 1e-10
MIN_WEIGHT = 1e-300

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])
IDENTITY_QUAT.flags.writeable = False


def _norm(v: Array) -> Array:
    return np.sqrt(np.sum(v * v, axis=-1))


def as_unit_vec3(v, tol: float = UNIT_TOL) -> Array:
    """Validate and return a float64 unit 3-vector (batched)."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != 3:
        raise ValueError(f"expected trailing dimension 3, got shape {v.shape}")
    if np.any(np.abs(_norm(v) - 1.0) > tol):
        raise ValueError("vector is not unit length within tolerance")
    return v


def as_unit_quat(q, tol: float = UNIT_TOL) -> Array:
    """Validate and return a float64 unit quaternion (batched)."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape[-1] != 4:
        raise ValueError(f"expected trailing dimension 4, got shape {q.shape}")
    if np.any(np.abs(_norm(q) - 1.0) > tol):
        raise ValueError("quaternion is not unit length within tolerance")
    return q


def as_rotation_matrix(R, tol: float = ROTMAT_TOL) -> Array:
    """Validate R^T R = I and det(R) = 1 within tolerance."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape[-2:] != (3, 3):
        raise ValueError(f"expected trailing shape (3, 3), got {R.shape}")
    eye = np.eye(3)
    ortho = np.abs(np.swapaxes(R, -1, -2) @ R - eye).max(axis=(-1, -2))
    if np.any(ortho > tol) or np.any(np.abs(np.linalg.det(R) - 1.0) > tol):
        raise ValueError("matrix is not special orthogonal within tolerance")
    return R


def as_su2(U, tol: float = UNIT_TOL) -> Array:
    """Validate the SU(2) structure [[a, b], [-conj(b), conj(a)]], |a|^2+|b|^2=1."""
    U = np.asarray(U, dtype=np.complex128)
    if U.shape[-2:] != (2, 2):
        raise ValueError(f"expected trailing shape (2, 2), got {U.shape}")
    a, b = U[..., 0, 0], U[..., 0, 1]
    bad = np.abs(a.real**2 + a.imag**2 + b.real**2 + b.imag**2 - 1.0) > tol
    bad |= np.abs(U[..., 1, 0] + np.conj(b)) > tol
    bad |= np.abs(U[..., 1, 1] - np.conj(a)) > tol
    if np.any(bad):
        raise ValueError("matrix is not special unitary within tolerance")
    return U


def quat_normalize(q) -> Array:
    """Scale to unit norm. Raises on (near-)zero input."""
    q = np.asarray(q, dtype=np.float64)
    n = _norm(q)
    if np.any(n < 1e-30):
        raise ValueError("cannot normalize a near-zero quaternion")
    return q / n[..., None]


def quat_canonical(q) -> Array:
    """Fix the sign ambiguity: w >= 0; if w == 0, first nonzero of (x, y, z) >= 0."""
    q = np.asarray(q, dtype=np.float64)
    s = np.sign(q[..., 0])
    for k in (1, 2, 3):
        s = np.where(s == 0.0, np.sign(q[..., k]), s)
    s = np.where(s == 0.0, 1.0, s)
    return q * s[..., None]


def quat_conjugate(q) -> Array:
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_compose(a, b) -> Array:
    """Hamilton product a (x) b: rotating by the result applies b first, then a."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w1, x1, y1, z1 = (a[..., i] for i in range(4))
    w2, x2, y2, z2 = (b[..., i] for i in range(4))
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_to_rotmat(q) -> Array:
    """Rotation matrix of a unit quaternion; identical for q and -q."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = (q[..., i] for i in range(4))
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1.0 - 2.0 * y * y - 2.0 * z * z
    R[..., 0, 1] = 2.0 * x * y - 2.0 * w * z
    R[..., 0, 2] = 2.0 * x * z + 2.0 * w * y
    R[..., 1, 0] = 2.0 * x * y + 2.0 * w * z
    R[..., 1, 1] = 1.0 - 2.0 * x * x - 2.0 * z * z
    R[..., 1, 2] = 2.0 * y * z - 2.0 * w * x
    R[..., 2, 0] = 2.0 * x * z - 2.0 * w * y
    R[..., 2, 1] = 2.0 * y * z + 2.0 * w * x
    R[..., 2, 2] = 1.0 - 2.0 * x * x - 2.0 * y * y
    return R


def rotate_vec(q, v) -> Array:
    """Rotate v by unit quaternion q (equals quat_to_rotmat(q) @ v)."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def su2_from_quat(q) -> Array:
    """SU(2) matrix [[a, b], [-conj(b), conj(a)]] with a = w + xi, b = y + zi."""
    q = np.asarray(q, dtype=np.float64)
    a = q[..., 0] + 1j * q[..., 1]
    b = q[..., 2] + 1j * q[..., 3]
    U = np.empty(q.shape[:-1] + (2, 2), dtype=np.complex128)
    U[..., 0, 0] = a
    U[..., 0, 1] = b
    U[..., 1, 0] = -np.conj(b)
    U[..., 1, 1] = np.conj(a)
    return U


def quat_from_su2(U) -> Array:
    """Inverse of su2_from_quat. Reads (alpha, beta) off the top row; the
    output is not sign-canonicalized so the round trip is exact."""
    U = np.asarray(U, dtype=np.complex128)
    a, b = U[..., 0, 0], U[..., 0, 1]
    return np.stack([a.real, a.imag, b.real, b.imag], axis=-1)


def apply_frame_fix(q) -> Array:
    """Map a raw stereographic-solver quaternion to the world frame.

    The stereographic projection and the SU(2) isomorphism together conjugate
    the recovered rotation by a 90-degree rotation about the y-axis; undoing
    it is the permutation (w, x, y, z) -> (w, -z, y, x). Output is
    canonicalized.
    """
    q = np.asarray(q, dtype=np.float64)
    out = np.stack([q[..., 0], -q[..., 3], q[..., 2], q[..., 1]], axis=-1)
    return quat_canonical(out)


def undo_frame_fix(q) -> Array:
    """Inverse permutation of apply_frame_fix (no canonicalization)."""
    q = np.asarray(q, dtype=np.float64)
    return np.stack([q[..., 0], q[..., 3], q[..., 2], -q[..., 1]], axis=-1)


def quat_angular_error(q_est, q_gt) -> Array:
    """Angular distance in degrees: arccos(2 (q_est . q_gt)^2 - 1).

    Symmetric, invariant to the sign of either argument; the cosine argument
    is clamped to [-1, 1] to absorb round-off near 0 and 180 degrees.
    """
    q_est = np.asarray(q_est, dtype=np.float64)
    q_gt = np.asarray(q_gt, dtype=np.float64)
    d = np.sum(q_est * q_gt, axis=-1)
    c = np.clip(2.0 * d * d - 1.0, -1.0, 1.0)
    return np.degrees(np.arccos(c))


def quat_geodesic_error(q_est, q_gt) -> Array:
    """Same rotation distance as quat_angular_error, computed through the
    chord 4 arcsin(min(||qe - qg||, ||qe + qg||) / 2).

    The arccos form quantizes at ~1e-6 degrees near zero in float64; this
    form resolves down to ~1e-14 degrees and is what sub-1e-6 oracle
    comparisons should use.
    """
    q_est = np.asarray(q_est, dtype=np.float64)
    q_gt = np.asarray(q_gt, dtype=np.float64)
    dm = _norm(q_est - q_gt)
    dp = _norm(q_est + q_gt)
    half_chord = np.clip(np.minimum(dm, dp) / 2.0, 0.0, 1.0)
    return np.degrees(4.0 * np.arcsin(half_chord))


@dataclass(frozen=True)
class ObservationSet:
    """Weighted pairs of unit 3-vector observations.

    refs[i] is observed in the reference frame, targets[i] is the same
    direction observed in the rotated frame. Weights must be positive
    (entries below 1e-300 are rejected so downstream divisions stay finite).
    """

    refs: Array
    targets: Array
    weights: Array = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        refs = as_unit_vec3(self.refs)
        targets = as_unit_vec3(self.targets)
        if refs.ndim != 2 or targets.shape != refs.shape:
            raise ValueError("refs and targets must both have shape (n, 3)")
        if len(refs) < 1:
            raise ValueError("at least one observation is required")
        if self.weights is None:
            weights = np.ones(len(refs))
        else:
            weights = np.asarray(self.weights, dtype=np.float64)
        if weights.shape != (len(refs),):
            raise ValueError("weights must have shape (n,)")
        if np.any(weights < MIN_WEIGHT):
            raise ValueError("weights must be positive (>= 1e-300)")
        for arr in (refs, targets, weights):
            arr.flags.writeable = False
        object.__setattr__(self, "refs", refs)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return len(self.refs)

    def total_weight(self) -> float:
        return float(np.sum(self.weights))

    def loss(self, q) -> float:
        """Weighted alignment loss sum_i w_i ||b_i - R(q) a_i||^2."""
        r = rotate_vec(np.asarray(q, dtype=np.float64), self.refs)
        return float(np.sum(self.weights * np.sum((self.targets - r) ** 2, axis=-1)))

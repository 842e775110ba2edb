"""Closed-form aligners for one and two observation pairs.

The workhorse is the 4-row kernel table of the skew constraint matrix: for
an equal-magnitude pair (a, b) every nonzero row, normalized, is a
quaternion rotating a onto b, and each row has one identically-zero
component. Row selection by the largest-magnitude generating component of
a+b or a-b makes every routine here total over its domain.

All functions broadcast over leading batch dimensions; the math is purely
elementwise, so a case's result never depends on its batch neighbors.
"""

from __future__ import annotations

import numpy as np

from .errors import AntipodalSingularity, DegenerateFrame
from .quat import (
    Array,
    IDENTITY_QUAT,
    quat_canonical,
    quat_conjugate,
    quat_normalize,
    rotate_vec,
)
from .wahba import WahbaSolution, alignment_loss

# Below this cross-product norm the two-point problem has no unique
# solution and callers are routed to degenerate_two_point. Tunable.
DEGENERACY_TOL = 1e-10

# Coefficient-validity threshold, relative to the constraint scale.
COEF_TOL = 1e-14


def _dot(u, v):
    return np.sum(u * v, axis=-1)


def _norm(v):
    return np.sqrt(np.sum(v * v, axis=-1))


def align_cross(a, b) -> Array:
    """Rotation with axis a x b mapping unit a to unit b.

    Singular for (near-)antipodal pairs; use one_point_align for a total
    alternative.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    g = 1.0 + _dot(a, b)
    if np.any(g <= 1e-12):
        raise AntipodalSingularity("a . b is too close to -1")
    s = np.sqrt(2.0 * g)
    q = np.concatenate([(s / 2.0)[..., None], np.cross(a, b) / s[..., None]], axis=-1)
    return quat_canonical(q)


def kernel_rows(a, b) -> Array:
    """The four kernel-table rows for the pair (a, b), stacked as (..., 4, 4).

    Valid for any pair with ||a|| = ||b||. Each nonzero row, normalized,
    aligns a to b; at most two rows are linearly independent.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    s = a + b
    d = a - b
    z = np.zeros(np.broadcast(s[..., 0], d[..., 0]).shape)
    rows = np.stack(
        [
            np.stack([z, s[..., 0], s[..., 1], s[..., 2]], axis=-1),
            np.stack([s[..., 0], z, d[..., 2], -d[..., 1]], axis=-1),
            np.stack([s[..., 1], -d[..., 2], z, d[..., 0]], axis=-1),
            np.stack([s[..., 2], d[..., 1], -d[..., 0], z], axis=-1),
        ],
        axis=-2,
    )
    return rows


def _q_rows(a, b) -> Array:
    """Rows of the skew constraint matrix for (a, b), stacked (..., 4, 4)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    s = a + b
    d = a - b
    z = np.zeros(np.broadcast(s[..., 0], d[..., 0]).shape)
    return np.stack(
        [
            np.stack([z, d[..., 0], d[..., 1], d[..., 2]], axis=-1),
            np.stack([-d[..., 0], z, -s[..., 2], s[..., 1]], axis=-1),
            np.stack([-d[..., 1], s[..., 2], z, -s[..., 0]], axis=-1),
            np.stack([-d[..., 2], -s[..., 1], s[..., 0], z], axis=-1),
        ],
        axis=-2,
    )


def _components(a, b) -> Array:
    """The six generating components (s_x, s_y, s_z, d_x, d_y, d_z)."""
    s = a + b
    d = a - b
    return np.concatenate([s, d], axis=-1)


# component index -> kernel row containing it (one_point choice)
_ONE_POINT_ROW = np.array([1, 2, 3, 2, 3, 1])
# component index -> the two kernel rows containing it
_KERNEL_PAIR = np.array([[0, 1], [0, 2], [0, 3], [2, 3], [1, 3], [1, 2]])
# component index -> the two constraint-matrix rows containing it
_QROW_PAIR = np.array([[2, 3], [1, 3], [1, 2], [0, 1], [0, 2], [0, 3]])


def one_point_align(a, b) -> Array:
    """Total aligner of unit a to unit b with one zero quaternion component.

    Selects the kernel row generated by the largest-magnitude component of
    a+b or a-b; that row's norm is at least sqrt(2/3), so the result is
    well-conditioned for every input including antipodal pairs.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    rows = kernel_rows(a, b)
    comp = _components(a, b)
    pick = _ONE_POINT_ROW[np.argmax(np.abs(comp), axis=-1)]
    row = np.take_along_axis(rows, pick[..., None, None], axis=-2)[..., 0, :]
    return quat_canonical(quat_normalize(row))


def _kernel_aligner(a1, b1, a2, b2):
    """Unnormalized quaternion aligning a1->b1 and a2->b2 (equal-magnitude
    pairs), chosen by the robust row-selection procedure.

    Returns (q_tilde, used_fallback): when both candidate constraint rows of
    the second pair have vanishing coefficients the result degrades to a
    kernel row of the first pair, which is the stated fallback.
    """
    rows1 = kernel_rows(a1, b1)
    pair1 = _KERNEL_PAIR[np.argmax(np.abs(_components(a1, b1)), axis=-1)]
    rA = np.take_along_axis(rows1, pair1[..., 0:1, None], axis=-2)[..., 0, :]
    rB = np.take_along_axis(rows1, pair1[..., 1:2, None], axis=-2)[..., 0, :]

    qrows2 = _q_rows(a2, b2)
    pair2 = _QROW_PAIR[np.argmax(np.abs(_components(a2, b2)), axis=-1)]
    c1 = np.take_along_axis(qrows2, pair2[..., 0:1, None], axis=-2)[..., 0, :]
    c2 = np.take_along_axis(qrows2, pair2[..., 1:2, None], axis=-2)[..., 0, :]

    scale = np.maximum(_norm(rA), _norm(rB))

    def coefs(c):
        ca = _dot(c, rA)
        cb = _dot(c, rB)
        ok = np.maximum(np.abs(ca), np.abs(cb)) > COEF_TOL * (_norm(c) * scale)
        return ca, cb, ok

    ca1, cb1, ok1 = coefs(c1)
    ca2, cb2, ok2 = coefs(c2)
    ca = np.where(ok1, ca1, ca2)
    cb = np.where(ok1, cb1, cb2)
    q = cb[..., None] * rA - ca[..., None] * rB
    fallback = ~(ok1 | ok2)
    # both constraint rows vanish on the kernel: any kernel row of pair 1
    q = np.where(fallback[..., None], rA, q)
    return q, fallback


def two_point_exact(a1, a2, b1, b2) -> Array:
    """Rotation mapping a1->b1 and a2->b2 for exactly-alignable unit pairs.

    Row selection is by largest-magnitude components with the coefficient
    fallback, so any consistent input away from a1 x a2 = 0 yields a finite
    unit quaternion.
    """
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    if np.any(_norm(np.cross(a1, a2)) == 0.0):
        raise DegenerateFrame("a1 x a2 = 0; use degenerate_two_point")
    q, _ = _kernel_aligner(a1, b1, a2, b2)
    return quat_canonical(quat_normalize(q))


def average_two_quats(q1, q2, w1, w2) -> Array:
    """Weighted Frobenius-mean rotation of two unnormalized quaternions.

    Closed form: the mean is mu q1 + nu q2 with scalars from a 2x2
    generalized eigenproblem; of the two equivalent scalar sets, the first
    is used when w1 > w2 and the second otherwise, so each stays correct as
    q1 . q2 -> 0. At an exact tie with q1 . q2 = 0 either input is a valid
    mean and q1 is returned.
    """
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    w1 = np.asarray(w1, dtype=np.float64)
    w2 = np.asarray(w2, dtype=np.float64)
    N1 = _dot(q1, q1)
    N2 = _dot(q2, q2)
    if np.any(N1 < 1e-60) or np.any(N2 < 1e-60):
        raise ValueError("input quaternion magnitudes must exceed 1e-30")
    dot = _dot(q1, q2)

    first = w1 > w2
    tau = np.where(first, w1 - w2, w2 - w1) * N1 * N2
    root = tau + np.sqrt(tau * tau + 4.0 * w1 * w2 * N1 * N2 * dot * dot)
    mu = np.where(first, root, 2.0 * w1 * N2 * dot)
    nu = np.where(first, 2.0 * w2 * N1 * dot, root)

    den_sq = N1 * mu * mu + N2 * nu * nu + 2.0 * dot * mu * nu
    tiny = den_sq <= 0.0
    den = np.sqrt(np.where(tiny, 1.0, den_sq))
    q = (mu[..., None] * q1 + nu[..., None] * q2) / den[..., None]
    if np.any(tiny):
        # exact tie (w1 == w2, q1 . q2 == 0): pick the first rotation
        q = np.where(tiny[..., None], quat_normalize(q1), q)
    return quat_normalize(q)


def _scaled_cross_pair(u1, u2, v1, v2):
    """(n1, n2): cross products with v's scaled to match u's magnitude."""
    n1 = np.cross(u1, u2)
    n2 = np.cross(v1, v2)
    r = _norm(n1) / np.where(_norm(n2) > 0.0, _norm(n2), 1.0)
    return n1, r[..., None] * n2


def two_point_weighted_batch(a1, a2, b1, b2, w1, w2):
    """Vectorized optimal two-point solver. Returns (q, degenerate_mask);
    masked lanes hold placeholder quaternions."""
    a1, a2 = np.asarray(a1, dtype=np.float64), np.asarray(a2, dtype=np.float64)
    b1, b2 = np.asarray(b1, dtype=np.float64), np.asarray(b2, dtype=np.float64)
    n1, n2 = _scaled_cross_pair(a1, a2, b1, b2)
    degenerate = (_norm(np.cross(a1, a2)) <= DEGENERACY_TOL) | (
        _norm(np.cross(b1, b2)) <= DEGENERACY_TOL
    )
    q1, _ = _kernel_aligner(a1, b1, n1, n2)
    q2, _ = _kernel_aligner(a2, b2, n1, n2)
    q = average_two_quats(q1, q2, w1, w2)
    return quat_canonical(q), degenerate


def two_point_weighted(a1, a2, b1, b2, w1, w2) -> WahbaSolution:
    """Globally optimal weighted alignment of two unit pairs: the weighted
    average of the two rotations that align one pair each plus the matched
    cross products."""
    q, degenerate = two_point_weighted_batch(a1, a2, b1, b2, w1, w2)
    if np.any(degenerate):
        raise DegenerateFrame("vanishing cross product; use degenerate_two_point")
    refs = np.stack([a1, a2], axis=-2)
    tgts = np.stack([b1, b2], axis=-2)
    w = np.stack([np.broadcast_to(w1, q.shape[:-1]), np.broadcast_to(w2, q.shape[:-1])], axis=-1)
    loss = alignment_loss(q, refs, tgts, w)
    cond = min(float(_norm(np.cross(a1, a2))), float(_norm(np.cross(b1, b2))))
    return WahbaSolution(q, float(loss), cond)


def two_point_unweighted_batch(a1, a2, b1, b2):
    """Vectorized equal-weight two-point solver. Returns (q, degenerate_mask)."""
    a1, a2 = np.asarray(a1, dtype=np.float64), np.asarray(a2, dtype=np.float64)
    b1, b2 = np.asarray(b1, dtype=np.float64), np.asarray(b2, dtype=np.float64)
    degenerate = (_norm(np.cross(a1, a2)) <= DEGENERACY_TOL) | (
        _norm(np.cross(b1, b2)) <= DEGENERACY_TOL
    )
    s1 = a1 + a2
    d1 = a1 - a2
    sb = b1 + b2
    db = b1 - b2
    # norm-ratio scalings avoid squaring intermediates
    rs = _norm(s1) / np.where(_norm(sb) > 0.0, _norm(sb), 1.0)
    rd = _norm(d1) / np.where(_norm(db) > 0.0, _norm(db), 1.0)
    q, _ = _kernel_aligner(s1, rs[..., None] * sb, d1, rd[..., None] * db)
    return quat_canonical(quat_normalize(q)), degenerate


def two_point_unweighted(a1, a2, b1, b2) -> WahbaSolution:
    """Optimal equal-weight alignment: the unique rotation taking the
    sum direction a1+a2 to b1+b2 and the difference direction a1-a2 to
    b1-b2 (after matching magnitudes)."""
    q, degenerate = two_point_unweighted_batch(a1, a2, b1, b2)
    if np.any(degenerate):
        raise DegenerateFrame("vanishing cross product; use degenerate_two_point")
    refs = np.stack([a1, a2], axis=-2)
    tgts = np.stack([b1, b2], axis=-2)
    loss = alignment_loss(q, refs, tgts, np.ones(q.shape[:-1] + (2,)))
    a1 = np.asarray(a1, dtype=np.float64)
    cond = min(
        float(_norm(np.cross(a1, np.asarray(a2, dtype=np.float64)))),
        float(_norm(np.cross(np.asarray(b1, dtype=np.float64), np.asarray(b2, dtype=np.float64)))),
    )
    return WahbaSolution(q, float(loss), cond)


def degenerate_two_point(a1, a2, b1, b2, w1, w2) -> Array:
    """A particular optimal rotation when either point set is collinear.

    The more collinear set (larger dot magnitude) is treated as collinear;
    the weighted average of the other set (sum or difference, by the sign
    of the collinear set's dot product) is aligned to that set's first
    point. Returns the identity when the weighted average vanishes, where
    the objective is flat.
    """
    a1 = np.asarray(a1, dtype=np.float64)
    a2 = np.asarray(a2, dtype=np.float64)
    b1 = np.asarray(b1, dtype=np.float64)
    b2 = np.asarray(b2, dtype=np.float64)
    w1 = float(w1)
    w2 = float(w2)
    targets_collinear = abs(_dot(b1, b2)) >= abs(_dot(a1, a2))
    if targets_collinear:
        sign = 1.0 if _dot(b1, b2) >= 0.0 else -1.0
        v = w1 * a1 + sign * w2 * a2
        if _norm(v) <= 1e-12 * (w1 + w2):
            return IDENTITY_QUAT.copy()
        return quat_canonical(one_point_align(v / _norm(v), b1))
    sign = 1.0 if _dot(a1, a2) >= 0.0 else -1.0
    v = w1 * b1 + sign * w2 * b2
    if _norm(v) <= 1e-12 * (w1 + w2):
        return IDENTITY_QUAT.copy()
    return quat_canonical(quat_conjugate(one_point_align(v / _norm(v), a1)))

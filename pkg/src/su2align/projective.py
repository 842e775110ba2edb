"""Stereographic projection and the complex projective picture of rotations.

A projective point is a complex ray: a complex128 array ``[z1, z2]`` with
``(z1, z2) != 0``, identified up to any nonzero complex scale. Points are
stored unnormalized; all comparisons go through the scale-free chordal
metric, which keeps the point at infinity ``[1, 0]`` an ordinary citizen.

The projection pole sits at (0, 0, -1): the sphere point ``(x, y, z)`` maps
to the ray ``[x + yi, 1 + z]`` and the pole itself to ``[1, 0]``.
"""

from __future__ import annotations

import numpy as np

from .quat import Array

# Rays with components outside this magnitude band are rescaled by the
# largest component magnitude; projectively a no-op, numerically it keeps
# |z1*p2 - z2*p1| representable.
GUARD_LO = 1e-150
GUARD_HI = 1e150

POINT_AT_INFINITY = np.array([1.0 + 0.0j, 0.0 + 0.0j])
POINT_AT_INFINITY.flags.writeable = False


def _guard(p: Array) -> Array:
    m = np.maximum(np.abs(p[..., 0]), np.abs(p[..., 1]))
    scale = np.where((m > GUARD_HI) | ((m < GUARD_LO) & (m > 0.0)), m, 1.0)
    return p / scale[..., None]


def as_projective(p) -> Array:
    """Validate a complex ray (nonzero) and apply the magnitude guard."""
    p = np.asarray(p, dtype=np.complex128)
    if p.shape[-1] != 2:
        raise ValueError(f"expected trailing dimension 2, got shape {p.shape}")
    if np.any((p[..., 0] == 0) & (p[..., 1] == 0)):
        raise ValueError("the zero vector is not a projective point")
    return _guard(p)


def as_mobius(m) -> Array:
    """Validate an invertible 2x2 complex matrix."""
    m = np.asarray(m, dtype=np.complex128)
    if m.shape[-2:] != (2, 2):
        raise ValueError(f"expected trailing shape (2, 2), got {m.shape}")
    det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    if np.any(det == 0):
        raise ValueError("Moebius transform must have nonzero determinant")
    return m


def stereo_project(a) -> Array:
    """Project a unit 3-vector to a complex ray; the pole maps to [1, 0].

    For a != (0, 0, -1) the ray [x + yi, 1 + z] equals the textbook plane
    coordinate [x + yi over 1 + z, 1] up to scale, with no division.
    """
    a = np.asarray(a, dtype=np.float64)
    x, y, z = a[..., 0], a[..., 1], a[..., 2]
    p = np.stack([x + 1j * y, (1.0 + z) + 0j], axis=-1)
    at_pole = (p[..., 0] == 0) & (p[..., 1] == 0)
    if np.any(at_pole):
        p = np.where(at_pole[..., None], POINT_AT_INFINITY, p)
    return _guard(p)


def stereo_unproject(p) -> Array:
    """Inverse stereographic projection; scale-invariant in the ray."""
    p = _guard(np.asarray(p, dtype=np.complex128))
    z1, z2 = p[..., 0], p[..., 1]
    n1 = z1.real**2 + z1.imag**2
    n2 = z2.real**2 + z2.imag**2
    c = z1 * np.conj(z2)
    return np.stack([2.0 * c.real, 2.0 * c.imag, n2 - n1], axis=-1) / (n1 + n2)[..., None]


def projective_chordal_sq(p, q) -> Array:
    """Squared chordal distance of the pre-images: 4 |z1 q2 - z2 q1|^2 / (|z|^2 |q|^2).

    Scale-invariant in both rays and valid for points at infinity.
    """
    p = np.asarray(p, dtype=np.complex128)
    q = np.asarray(q, dtype=np.complex128)
    np_ = np.hypot(np.abs(p[..., 0]), np.abs(p[..., 1]))
    nq = np.hypot(np.abs(q[..., 0]), np.abs(q[..., 1]))
    # divide before squaring so guarded extreme magnitudes cannot overflow
    d = (p[..., 0] * q[..., 1] - p[..., 1] * q[..., 0]) / (np_ * nq)
    return 4.0 * (d.real**2 + d.imag**2)


def chi_embed(x) -> Array:
    """Embed a 3-vector as the 2x2 complex matrix [[xi, y+zi], [-y+zi, -xi]].

    det(chi(x)) = ||x||^2; for unit x the image lies in SU(2).
    """
    x = np.asarray(x, dtype=np.float64)
    X = np.empty(x.shape[:-1] + (2, 2), dtype=np.complex128)
    X[..., 0, 0] = 1j * x[..., 0]
    X[..., 0, 1] = x[..., 1] + 1j * x[..., 2]
    X[..., 1, 0] = -x[..., 1] + 1j * x[..., 2]
    X[..., 1, 1] = -1j * x[..., 0]
    return X


def chi_unembed(X) -> Array:
    """Read the 3-vector back off a chi-structured matrix."""
    X = np.asarray(X, dtype=np.complex128)
    return np.stack(
        [X[..., 0, 0].imag, X[..., 0, 1].real, X[..., 0, 1].imag], axis=-1
    )


def su2_conjugate(u, x) -> Array:
    """Rotate a 3-vector by conjugation: chi^-1(U chi(x) U^H).

    The chi embedding and the quaternion isomorphism come from the same
    matrix representation of the quaternion algebra, so this equals the
    plain rotation rotate_vec(quat_from_su2(u), x) with no frame fix.
    """
    u = np.asarray(u, dtype=np.complex128)
    X = chi_embed(x)
    return chi_unembed(u @ X @ np.conj(np.swapaxes(u, -1, -2)))


def mobius_apply(m, p) -> Array:
    """Apply a Moebius transform to a ray: the plain matrix-vector product."""
    m = np.asarray(m, dtype=np.complex128)
    p = np.asarray(p, dtype=np.complex128)
    out = np.einsum("...ij,...j->...i", m, p)
    return _guard(out)

"""Linear algebra on the unit sphere of index directions.

Directions are plain 1-d float arrays of unit Euclidean norm. Complement bases
are ``p x (p-1)`` arrays with orthonormal columns orthogonal to the direction
they were built from.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateInputError, DomainError

__all__ = [
    "as_direction",
    "projection_complement",
    "orthonormal_complement",
    "chart_forward",
    "chart_inverse",
    "retract",
    "align_sign",
    "canonical_sign",
    "angular_error",
]


def as_direction(beta, tol: float = 1e-10) -> np.ndarray:
    """Validate ``beta`` as a unit vector with ``p >= 2`` and return a float copy."""
    b = np.array(beta, dtype=float).reshape(-1)
    if b.size < 2:
        raise DomainError(f"direction needs p >= 2 coordinates, got {b.size}")
    if not np.all(np.isfinite(b)):
        raise DomainError("direction has non-finite coordinates")
    nrm = np.linalg.norm(b)
    if abs(nrm - 1.0) > tol:
        raise DomainError(f"direction must have unit norm, got {nrm!r}")
    return b


def projection_complement(beta) -> np.ndarray:
    """Orthogonal projector ``I - beta beta^T`` onto the complement of ``beta``."""
    b = as_direction(beta)
    return np.eye(b.size) - np.outer(b, b)


def orthonormal_complement(beta) -> np.ndarray:
    """Deterministic orthonormal basis of the complement of ``beta``.

    Sign rule: let ``k`` be the first index of the largest ``|beta_k|`` and
    ``b = sign(beta_k) * beta`` so that ``b_k > 0``. The Householder
    reflection ``H = I - 2 v v^T / v^T v`` with ``v = b + e_k`` maps ``b`` to
    ``-e_k``; since ``H`` is symmetric orthogonal, its column ``k`` equals
    ``-b`` and the remaining ``p - 1`` columns (in their original order) form
    the returned basis. ``v_k = b_k + 1 >= 1`` so there is no cancellation.
    """
    b = as_direction(beta)
    k = int(np.argmax(np.abs(b)))
    if b[k] < 0:
        b = -b
    v = b.copy()
    v[k] += 1.0
    H = np.eye(b.size) - (2.0 / (v @ v)) * np.outer(v, v)
    return np.delete(H, k, axis=1)


def chart_forward(beta, anchor, basis) -> np.ndarray:
    """Chart coordinates ``basis^T beta`` of ``beta`` around ``anchor``."""
    b = as_direction(beta)
    a = as_direction(anchor)
    if b @ a <= 0:
        raise DomainError("beta lies outside the open hemisphere around the anchor")
    return np.asarray(basis).T @ b


def chart_inverse(alpha, anchor, basis) -> np.ndarray:
    """Inverse chart ``basis alpha + sqrt(1 - |alpha|^2) anchor``."""
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    r2 = float(alpha @ alpha)
    if r2 >= 1.0:
        raise DomainError(f"chart coordinates need |alpha| < 1, got {np.sqrt(r2)!r}")
    a = as_direction(anchor)
    return np.asarray(basis) @ alpha + np.sqrt(1.0 - r2) * a


def retract(v, eps: float = 1e-10) -> np.ndarray:
    """Normalize ``v`` back onto the sphere."""
    v = np.asarray(v, dtype=float).reshape(-1)
    nrm = np.linalg.norm(v)
    if not np.isfinite(nrm) or nrm <= eps:
        raise DegenerateInputError(f"cannot normalize vector of norm {nrm!r}")
    if abs(nrm - 1.0) <= 2 * np.finfo(float).eps:
        return v.copy()
    return v / nrm


def align_sign(beta, reference) -> np.ndarray:
    """Return ``beta`` or ``-beta``, whichever has nonnegative inner product
    with ``reference`` (ties keep ``+beta``)."""
    b = np.asarray(beta, dtype=float)
    return b if b @ np.asarray(reference, dtype=float) >= 0 else -b


def canonical_sign(beta) -> np.ndarray:
    """Sign convention when no reference exists: first nonzero coordinate positive."""
    b = np.asarray(beta, dtype=float)
    nz = np.flatnonzero(b)
    if nz.size and b[nz[0]] < 0:
        return -b
    return b


def angular_error(beta_hat, beta0) -> float:
    """Sign-invariant angle ``arccos |beta_hat^T beta0|`` in radians."""
    c = abs(float(np.dot(beta_hat, beta0)))
    # arccos loses precision near 1; use the complement norm instead
    b = np.asarray(beta_hat, dtype=float)
    r = np.asarray(beta0, dtype=float)
    s = np.linalg.norm(b - (b @ r) * r)
    return float(np.arctan2(s, c))

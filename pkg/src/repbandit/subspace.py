"""Dense linear-algebra primitives for subspace estimation.

Bases are plain ``ndarray`` objects of shape ``(d, k)`` with orthonormal
columns. Actions and design matrices follow the column convention: a design
``x`` of shape ``(d, n)`` holds one action per column.
"""
from __future__ import annotations

import numpy as np

ORTHO_TOL = 1e-10
SUBSPACE_TOL = 1e-8
MAX_CONDITION = 1e12


class SubspaceError(ValueError):
    """Raised when a linear-algebra precondition does not hold."""


def check_orthonormal(basis: np.ndarray, tol: float = ORTHO_TOL) -> np.ndarray:
    """Validate ``basis`` as a ``(d, k)`` matrix with orthonormal columns."""
    basis = np.asarray(basis, dtype=float)
    if basis.ndim == 1:
        basis = basis[:, None]
    if basis.ndim != 2:
        raise SubspaceError(f"basis must be 2-D, got shape {basis.shape}")
    d, k = basis.shape
    if k < 1 or k > d:
        raise SubspaceError(f"basis must satisfy 1 <= k <= d, got d={d}, k={k}")
    if not np.all(np.isfinite(basis)):
        raise SubspaceError("basis has non-finite entries")
    err = np.max(np.abs(basis.T @ basis - np.eye(k)))
    if err > tol:
        raise SubspaceError(f"columns are not orthonormal (max Gram error {err:.2e})")
    return basis


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = check_orthonormal(a)
    b = check_orthonormal(b)
    if a.shape != b.shape:
        raise SubspaceError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def orthonormal_complement(basis: np.ndarray) -> np.ndarray:
    """Return a ``(d, d-k)`` orthonormal basis of the complement of ``Span(basis)``."""
    basis = check_orthonormal(basis)
    d, k = basis.shape
    if k == d:
        raise SubspaceError("complement is empty")
    # the trailing left singular vectors of the full SVD span the complement
    u, _, _ = np.linalg.svd(basis, full_matrices=True)
    comp = u[:, k:]
    # re-project once to kill rounding leakage along Span(basis)
    comp = comp - basis @ (basis.T @ comp)
    q, r = np.linalg.qr(comp)
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def principal_angle_sines(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sines of the principal angles between two equal-dimension subspaces.

    Entry ``i`` corresponds to the ``i``-th largest cosine, so the result
    runs from the smallest angle to the largest: ``sin θ_r <= ... <= sin θ_1``.
    """
    a, b = _check_pair(a, b)
    cosines = np.clip(np.linalg.svd(a.T @ b, compute_uv=False), 0.0, 1.0)
    return np.sqrt(np.clip(1.0 - cosines**2, 0.0, 1.0))


def subspace_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Frobenius norm ``||a^T b_perp||_F``; zero iff the spans coincide."""
    a, b = _check_pair(a, b)
    if a.shape[1] == a.shape[0]:
        return 0.0
    return float(np.linalg.norm(a.T @ orthonormal_complement(b)))


def top_r_left_singular_basis(
    w: np.ndarray, r: int, return_gap: bool = False
) -> np.ndarray | tuple[np.ndarray, float]:
    """Leading ``r`` left singular vectors of a symmetric matrix.

    When ``return_gap`` is set, also returns ``sigma_r - sigma_{r+1}``; a zero
    gap means the leading subspace is not unique and any valid basis is
    returned.
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise SubspaceError(f"w must be square, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise SubspaceError("w has non-finite entries")
    d = w.shape[0]
    if not 1 <= r < d:
        raise SubspaceError(f"need 1 <= r < d, got r={r}, d={d}")
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.max(np.abs(w - w.T)) > 1e-8 * scale:
        raise SubspaceError("w is not symmetric")
    u, s, _ = np.linalg.svd(w)
    basis = u[:, :r]
    if return_gap:
        return basis, float(s[r - 1] - s[r])
    return basis


def _guard_gram(gram: np.ndarray, what: str) -> None:
    rank = np.linalg.matrix_rank(gram)
    if rank < gram.shape[0]:
        raise SubspaceError(
            f"{what} Gram matrix is rank deficient (rank {rank} < {gram.shape[0]})"
        )
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SubspaceError(f"{what} Gram matrix is ill-conditioned (cond {cond:.2e})")


def least_squares_pooled(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Ordinary least squares ``(x x^T)^{-1} x y`` for a ``(d, n)`` design."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.shape != (x.shape[1],):
        raise SubspaceError(f"shape mismatch: x {x.shape}, y {y.shape}")
    gram = x @ x.T
    _guard_gram(gram, "design")
    return np.linalg.solve(gram, x @ y)


def least_squares_subspace(
    bhat: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Least squares restricted to ``Span(bhat)``.

    Returns ``(alpha, theta_hat)`` with ``theta_hat = bhat @ alpha``.
    """
    bhat = check_orthonormal(bhat)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] != bhat.shape[0] or y.shape != (x.shape[1],):
        raise SubspaceError(f"shape mismatch: bhat {bhat.shape}, x {x.shape}, y {y.shape}")
    z = bhat.T @ x
    gram = z @ z.T
    _guard_gram(gram, "reduced design")
    alpha = np.linalg.solve(gram, z @ y)
    return alpha, bhat @ alpha


def random_grassmann_basis(ambient: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormal basis of a uniformly random ``dim``-subspace of ``R^ambient``.

    Gaussian matrix followed by QR with a sign-fixed diagonal, which makes the
    draw Haar distributed and deterministic for a given generator state.
    """
    if not 1 <= dim <= ambient:
        raise SubspaceError(f"need 1 <= dim <= ambient, got dim={dim}, ambient={ambient}")
    g = rng.standard_normal((ambient, dim))
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def ellipsoid_argmax(theta: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Maximizer of ``x^T theta`` over ``{x : x^T m^{-1} x <= 1}``.

    Closed form ``m theta / sqrt(theta^T m theta)``.
    """
    theta = np.asarray(theta, dtype=float)
    if not np.any(theta):
        raise SubspaceError("maximizer undefined for theta = 0")
    mt = m @ theta
    return mt / np.sqrt(theta @ mt)

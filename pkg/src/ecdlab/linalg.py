"""Small dense complex matrix kernel.

Everything here works on a single ``(N, N)`` matrix or on a stack
``(..., N, N)``; the Jacobi sweeps are applied to the whole stack at once,
which is what makes per-step exponentials in the propagator cheap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY_2 = np.eye(2, dtype=complex)

HERMITIAN_TOL = 1e-12
JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 60


class LinalgError(ValueError):
    """Raised for shape mismatches or non-Hermitian input."""


@dataclass(frozen=True)
class EigSystem:
    """Ascending eigenvalues and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __iter__(self):
        yield self.eigenvalues
        yield self.eigenvectors


def as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise LinalgError(f"expected square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise LinalgError("matrix has non-finite entries")
    return A


def dagger(A: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(A, -1, -2))


def commutator(A, B) -> np.ndarray:
    """Return ``AB - BA``."""
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    if A.shape[-2:] != B.shape[-2:]:
        raise LinalgError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return A @ B - B @ A


def hs_inner(A, B) -> complex:
    """Hilbert-Schmidt inner product tr(A^dagger B)."""
    return complex(np.vdot(np.asarray(A), np.asarray(B)))


def frobenius(A, convention: str = "literal"):
    """Frobenius measure of ``A``.

    ``literal`` returns tr(A A^dagger) (no square root), ``sqrt`` the usual
    norm. Stacks are reduced over the last two axes.
    """
    A = np.asarray(A)
    sq = np.sum(np.abs(A) ** 2, axis=(-2, -1))
    if convention == "literal":
        return sq
    if convention == "sqrt":
        return np.sqrt(sq)
    raise ValueError(f"unknown norm convention {convention!r}")


def is_hermitian(A, tol: float = HERMITIAN_TOL) -> bool:
    A = np.asarray(A)
    scale = max(1.0, float(np.max(np.abs(A), initial=0.0)))
    return bool(np.max(np.abs(A - dagger(A)), initial=0.0) <= tol * scale)


def _jacobi_stack(A: np.ndarray, tol: float, max_sweeps: int):
    """Cyclic complex Jacobi on a stack of Hermitian matrices, in place."""
    n = A.shape[-1]
    batch = A.shape[0]
    V = np.broadcast_to(np.eye(n, dtype=complex), A.shape).copy()
    scale = np.sqrt(np.sum(np.abs(A) ** 2, axis=(-2, -1)))
    scale = np.where(scale > 0, scale, 1.0)
    idx = np.arange(batch)
    offmask = 1.0 - np.eye(n)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.abs(A * offmask) ** 2, axis=(-2, -1)))
        active = off > tol * scale
        if not np.any(active):
            return A, V
        whole = bool(np.all(active))
        sel = idx[active]
        a = A if whole else A[sel]
        v = V if whole else V[sel]
        scale_a = scale if whole else scale[sel]
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                r = np.abs(apq)
                app = a[:, p, p].real
                aqq = a[:, q, q].real
                nz = r > 1e-30 * scale_a
                rr = np.where(nz, r, 1.0)
                theta = (aqq - app) / (2.0 * rr)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(1.0 + theta * theta))
                t = np.where(nz, t, 0.0)
                c = (1.0 / np.sqrt(1.0 + t * t))[:, None]
                s = t[:, None] * c
                ph = np.where(nz, apq / rr, 1.0)[:, None]  # e^{i phi}
                phc = np.conj(ph)
                # A <- J^dag A J with J_pp=c, J_pq=s, J_qp=-s e^{-i phi}, J_qq=c e^{-i phi}
                cp = a[:, :, p].copy()
                cq = a[:, :, q]
                a[:, :, p] = c * cp - s * phc * cq
                a[:, :, q] = s * cp + c * phc * cq
                rp = a[:, p, :].copy()
                rq = a[:, q, :]
                a[:, p, :] = c * rp - s * ph * rq
                a[:, q, :] = s * rp + c * ph * rq
                a[:, p, q] = 0.0
                a[:, q, p] = 0.0
                vp = v[:, :, p].copy()
                vq = v[:, :, q]
                v[:, :, p] = c * vp - s * phc * vq
                v[:, :, q] = s * vp + c * phc * vq
        if not whole:
            A[sel] = a
            V[sel] = v
    raise LinalgError(f"Jacobi eigensolver did not converge in {max_sweeps} sweeps")


def hermitian_eig(A, tol: float = JACOBI_TOL, check: bool = True) -> EigSystem:
    """Eigen-decomposition of a Hermitian matrix (or stack) by cyclic Jacobi.

    Eigenvalues come back ascending; ties keep their original diagonal order
    so labels stay stable along a path.
    """
    A = as_matrix(A)
    if check and not is_hermitian(A):
        raise LinalgError("matrix is not Hermitian within tolerance")
    shape = A.shape
    work = ((A + dagger(A)) / 2).reshape(-1, shape[-1], shape[-1]).copy()
    D, V = _jacobi_stack(work, tol, JACOBI_MAX_SWEEPS)
    w = np.real(np.diagonal(D, axis1=-2, axis2=-1))
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    V = np.take_along_axis(V, order[:, None, :], axis=-1)
    w = w.reshape(shape[:-1])
    return EigSystem(w, V.reshape(shape))


def expm_skew(H, t: float = 1.0) -> np.ndarray:
    """exp(-i H t) for Hermitian ``H`` (or a stack) via eigendecomposition."""
    w, V = hermitian_eig(H)
    phases = np.exp(-1j * w * t)
    return (V * phases[..., None, :]) @ dagger(V)


def ordered_product(U: np.ndarray) -> np.ndarray:
    """Time-ordered product ``U[n-1] @ ... @ U[0]`` by pairwise reduction."""
    U = np.asarray(U)
    if U.shape[0] == 0:
        raise LinalgError("empty product")
    while U.shape[0] > 1:
        if U.shape[0] % 2:
            U = np.concatenate([U, np.eye(U.shape[-1], dtype=U.dtype)[None]])
        U = U[1::2] @ U[0::2]
    return U[0]

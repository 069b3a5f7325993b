"""Dynamical Lie algebra of a control set, membership and Cartan checks."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

from .linalg import LinalgError, as_matrix, commutator, is_hermitian

log = logging.getLogger(__name__)

INDEPENDENCE_TOL = 1e-10


@dataclass(frozen=True)
class ControlSet:
    """Time-independent Hermitian control matrices H_1..H_M.

    Traces are removed on construction (with a warning), so every stored
    matrix is traceless.
    """

    matrices: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        mats = np.array([as_matrix(m) for m in self.matrices], dtype=complex)
        if mats.ndim != 3 or len(mats) == 0:
            raise LinalgError("a control set needs at least one square matrix")
        n = mats.shape[-1]
        for k, m in enumerate(mats):
            if not is_hermitian(m):
                raise LinalgError(f"control matrix {k} is not Hermitian")
            tr = np.trace(m).real / n
            if abs(tr) > 1e-12:
                log.warning("removing trace %.3g from control matrix %d", tr * n, k)
                mats[k] = m - tr * np.eye(n)
        labels = tuple(self.labels) or tuple(f"H{k + 1}" for k in range(len(mats)))
        if len(labels) != len(mats):
            raise ValueError("one label per control matrix")
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.matrices.shape[-1]

    def __len__(self):
        return len(self.matrices)

    @cached_property
    def blocks(self) -> tuple:
        """Isometries onto the common invariant subspaces of all controls."""
        return invariant_subspaces(self.matrices)


def commutant(mats: np.ndarray, tol: float = 1e-10) -> list:
    """Hermitian basis of matrices commuting with every matrix in ``mats``."""
    n = mats.shape[-1]
    eye = np.eye(n)
    # column-major vec: vec(HX - XH) = (I kron H - H^T kron I) vec(X)
    L = np.concatenate([np.kron(eye, H) - np.kron(H.T, eye) for H in mats])
    _, sv, vh = np.linalg.svd(L)
    rank = int(np.sum(sv > tol * max(1.0, sv[0])))
    null = [v.reshape(n, n, order="F") for v in np.conj(vh[rank:])]
    herm = []
    for X in null:
        for h in ((X + X.conj().T) / 2, 1j * (X - X.conj().T) / 2):
            if np.linalg.norm(h) > tol:
                herm.append(h)
    return span_basis(herm)


def invariant_subspaces(mats: np.ndarray, tol: float = 1e-8) -> tuple:
    """Split C^N into subspaces left invariant by every control matrix.

    Eigenspaces of a generic Hermitian element of the commutant; the
    weights come from a fixed seed so the split is reproducible.
    """
    from .linalg import hermitian_eig

    n = mats.shape[-1]
    comm = commutant(mats)
    if len(comm) <= 1:
        return (np.eye(n, dtype=complex),)
    weights = np.random.default_rng(12345).normal(size=len(comm))
    X = sum(w * c for w, c in zip(weights, comm))
    w, V = hermitian_eig((X + X.conj().T) / 2)
    cuts = np.nonzero(np.diff(w) > tol * max(1.0, float(np.max(np.abs(w)))))[0] + 1
    return tuple(V[:, idx] for idx in np.split(np.arange(n), cuts))


@dataclass
class AlgebraBasis:
    """Hilbert-Schmidt orthonormal skew-Hermitian basis of a Lie algebra."""

    basis: list
    h_part: list = field(default_factory=list)
    p_part: list = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return len(self.basis)

    def gram(self) -> np.ndarray:
        B = np.array(self.basis).reshape(len(self.basis), -1)
        return np.conj(B) @ B.T


def _project_out(X: np.ndarray, basis: Sequence[np.ndarray]) -> np.ndarray:
    # two passes of classical Gram-Schmidt keep the rejection test honest
    for _ in range(2):
        for b in basis:
            X = X - np.vdot(b, X) * b
    return X


def _try_add(X: np.ndarray, basis: list, tol: float) -> bool:
    scale = np.linalg.norm(X)
    if scale == 0:
        return False
    R = _project_out(X / scale, basis)
    nrm = np.linalg.norm(R)
    if nrm <= tol:
        return False
    basis.append(R / nrm)
    return True


def span_basis(elements: Iterable[np.ndarray], tol: float = INDEPENDENCE_TOL) -> list:
    """Orthonormal basis for the real span of skew-Hermitian ``elements``."""
    basis: list = []
    for X in elements:
        _try_add(np.asarray(X, dtype=complex), basis, tol)
    return basis


def lie_closure(controls: ControlSet | Sequence, tol: float = INDEPENDENCE_TOL) -> AlgebraBasis:
    """Closure of ``{-i H_k}`` under commutation.

    Breadth-first: each round commutes the elements added in the previous
    round with every basis element, keeping those independent of the
    current span (Gram-Schmidt rejection below ``tol``).
    """
    if not isinstance(controls, ControlSet):
        controls = ControlSet(np.asarray(controls))
    basis: list = []
    frontier = []
    for H in controls.matrices:
        if _try_add(-1j * H, basis, tol):
            frontier.append(basis[-1])
    while frontier:
        new = []
        for X in frontier:
            for Y in list(basis):
                C = commutator(X, Y)
                # commutators of skew-Hermitian matrices stay skew-Hermitian
                C = (C - np.conj(C.T)) / 2
                if _try_add(C, basis, tol):
                    new.append(basis[-1])
        frontier = new
    return AlgebraBasis(basis)


def su_basis(n: int) -> list:
    """Orthonormal basis of su(n) built from generalized Gell-Mann matrices."""
    mats = []
    for j in range(n):
        for k in range(j + 1, n):
            S = np.zeros((n, n), dtype=complex)
            S[j, k] = S[k, j] = 1
            A = np.zeros((n, n), dtype=complex)
            A[j, k] = -1j
            A[k, j] = 1j
            mats += [S, A]
    for l in range(1, n):
        D = np.zeros((n, n), dtype=complex)
        D[:l, :l] = np.eye(l)
        D[l, l] = -l
        mats.append(D)
    return span_basis([-1j * m for m in mats])


def membership_residual(X, basis: AlgebraBasis | Sequence) -> float:
    """Frobenius norm of the part of ``-iX`` outside span(basis)."""
    X = as_matrix(X)
    elems = basis.basis if isinstance(basis, AlgebraBasis) else list(basis)
    if elems and elems[0].shape != X.shape:
        raise LinalgError(f"dimension mismatch: {X.shape} vs {elems[0].shape}")
    R = -1j * X
    for b in elems:
        R = R - np.vdot(b, R) * b
    return float(np.linalg.norm(R))


def _leak(C: np.ndarray, span: list) -> float:
    R = C
    for b in span:
        R = R - np.vdot(b, R) * b
    return float(np.linalg.norm(R))


def cartan_verify(h_part: Sequence, p_part: Sequence, tol: float = 1e-10) -> dict:
    """Check [h,h] in h, [h,p] in p, [p,p] in h.

    Returns the largest leakage norm per relation plus an overall ``ok``.
    """
    h = span_basis(h_part)
    p = span_basis(p_part)
    report = {
        "hh": max((_leak(commutator(a, b), h) for a in h for b in h), default=0.0),
        "hp": max((_leak(commutator(a, b), p) for a in h for b in p), default=0.0),
        "pp": max((_leak(commutator(a, b), h) for a in p for b in p), default=0.0),
    }
    report["ok"] = max(report.values()) < tol
    return report


def real_imag_split(basis: Sequence) -> tuple:
    """Split skew-Hermitian elements into real (so(N)) and imaginary parts."""
    real, imag = [], []
    for b in basis:
        real.append(b.real.astype(complex))
        imag.append(1j * b.imag)
    return span_basis(real), span_basis(imag)


def theorem2_check(cd_field: Callable[[float], np.ndarray], controls: ControlSet,
                   s_samples: Iterable[float], tol: float = 1e-9) -> dict:
    """For real symmetric controls, H_CD must be purely imaginary and HS-orthogonal
    to span{H_k} at every sample.

    ``cd_field`` maps s to H_CD; failures (e.g. degeneracy) are recorded
    per sample rather than raised.
    """
    mats = controls.matrices
    if np.max(np.abs(mats.imag)) > 1e-12:
        raise ValueError("theorem2_check needs real symmetric control matrices")
    span = span_basis(mats)
    max_real = 0.0
    max_overlap = 0.0
    failures = []
    for s in s_samples:
        try:
            Hcd = cd_field(s)
        except Exception as exc:  # noqa: BLE001 - recorded per sample
            failures.append((float(s), str(exc)))
            continue
        scale = max(1.0, float(np.linalg.norm(Hcd)))
        max_real = max(max_real, float(np.max(np.abs(Hcd.real))) / scale)
        max_overlap = max(max_overlap, max((abs(np.vdot(b, Hcd)) for b in span), default=0.0) / scale)
    return {
        "max_real_part": max_real,
        "max_overlap": max_overlap,
        "failures": failures,
        "ok": not failures and max_real < tol and max_overlap < tol,
    }

"""Hermitian eigen-solvers with deterministic eigenvector selection.

The batched functions (``min_eigvec``, ``gev_min``, ``gev_max``) work on
stacks of matrices with shape ``(..., N, N)`` and are what the beamformers
call once per frequency bin. ``eig_hermitian``, ``eig_min_vector`` and the
``gev_*_vector`` functions are the single-matrix API; they validate their
input and raise instead of flagging.

Selected eigenvectors obey one phase convention: the first component with
magnitude above ``PHASE_TOL`` is real and nonnegative. When the smallest
eigenvalue is (numerically) repeated, the returned vector is the normalized
projection of the lowest-index standard basis vector that has a nonzero
projection onto that eigenspace, so identical inputs always give identical
filters.
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .exceptions import SingularityError

__all__ = [
    "EigenPair",
    "eig_hermitian",
    "eig_min_vector",
    "gev_min_vector",
    "gev_max_vector",
    "min_eigvec",
    "gev_min",
    "gev_max",
    "fix_phase",
    "is_positive_definite",
]

PHASE_TOL = 1e-9
HERMITIAN_TOL = 1e-12
TIE_TOL = 1e-9
PD_TOL = 1e-12


@dataclass(frozen=True)
class EigenPair:
    value: float
    vector: np.ndarray


def fix_phase(v: np.ndarray, tol: float = PHASE_TOL) -> np.ndarray:
    """Rotate each vector along the last axis so its first significant entry is real >= 0."""
    v = np.asarray(v, dtype=complex)
    mag = np.abs(v)
    significant = mag > tol
    idx = np.argmax(significant, axis=-1)
    lead = np.take_along_axis(v, idx[..., None], axis=-1)[..., 0]
    lead_mag = np.abs(lead)
    phase = np.where(lead_mag > 0, np.conj(lead) / np.where(lead_mag > 0, lead_mag, 1), 1)
    return v * phase[..., None]


def _check_hermitian(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    scale = max(np.abs(m).max(), np.finfo(float).tiny)
    if np.abs(m - m.conj().T).max() > HERMITIAN_TOL * scale:
        raise ValueError(f"{name} is not Hermitian")
    return m


def _hermitize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    return 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))


def _select_min(values: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Pick the min-eigenvalue vector per matrix, resolving ties deterministically.

    ``values`` ascending, shape (B, N); ``vectors`` shape (B, N, N) with
    eigenvectors in columns.
    """
    n = values.shape[-1]
    out = vectors[:, :, 0].copy()
    if n == 1:
        return fix_phase(out)
    scale = np.maximum(np.abs(values).max(axis=-1), np.finfo(float).tiny)
    tied = (values[:, 1] - values[:, 0]) < TIE_TOL * scale
    for b in np.flatnonzero(tied):
        cluster = values[b] - values[b, 0] < TIE_TOL * scale[b]
        basis = vectors[b][:, cluster]
        # column k of proj is the projection of e_k onto the eigenspace
        proj = basis @ basis.conj().T
        norms = np.linalg.norm(proj, axis=0)
        k = int(np.argmax(norms > 1e-6))
        out[b] = proj[:, k] / norms[k]
    return fix_phase(out)


def min_eigvec(m: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Minimum eigenpair of every Hermitian matrix in a stack.

    Parameters
    ----------
    m : ndarray, shape (..., N, N)

    Returns
    -------
    values : ndarray, shape (...)
    vectors : ndarray, shape (..., N), unit norm
    """
    m = _hermitize(m)
    batch = m.shape[:-2]
    n = m.shape[-1]
    flat = m.reshape(-1, n, n)
    values, vectors = np.linalg.eigh(flat)
    vec = _select_min(values, vectors)
    return values[:, 0].reshape(batch), vec.reshape(batch + (n,))


def is_positive_definite(b: np.ndarray, tol: float = PD_TOL) -> np.ndarray:
    """Elementwise PD test for a stack: min eigenvalue > tol * max eigenvalue."""
    ev = np.linalg.eigvalsh(_hermitize(b))
    return (ev[..., -1] > 0) & (ev[..., 0] > tol * ev[..., -1])


def gev_min(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimum generalized eigenpair of ``a v = lambda b v`` for a stack of pairs.

    Solved through the Cholesky factor ``b = L L^H``: the standard problem
    ``L^{-1} a L^{-H} z = lambda z`` is solved and mapped back with
    ``v = L^{-H} z``, which gives ``v^H b v = 1``.

    Returns
    -------
    values : ndarray, shape (...)
    vectors : ndarray, shape (..., N)
        Zero where ``b`` is not positive definite.
    singular : ndarray of bool, shape (...)
    """
    a = _hermitize(a)
    b = _hermitize(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    batch = a.shape[:-2]
    n = a.shape[-1]
    a = a.reshape(-1, n, n)
    b = b.reshape(-1, n, n)
    singular = ~is_positive_definite(b)
    b = b.copy()
    b[singular] = np.eye(n)
    L = np.linalg.cholesky(b)
    Linv = np.linalg.inv(L)
    reduced = Linv @ a @ np.conj(np.swapaxes(Linv, -1, -2))
    values, z = min_eigvec(reduced)
    v = np.einsum("bji,bj->bi", Linv.conj(), z)
    v = fix_phase(v)
    v[singular] = 0
    values = np.where(singular, np.nan, values)
    return values.reshape(batch), v.reshape(batch + (n,)), singular.reshape(batch)


def gev_max(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Maximum generalized eigenpair; the mirror of :func:`gev_min` via ``-a``."""
    values, v, singular = gev_min(-np.asarray(a), b)
    return -values, v, singular


def eig_hermitian(m: np.ndarray) -> List[EigenPair]:
    """All eigenpairs of a Hermitian matrix, ascending by eigenvalue."""
    m = _check_hermitian(m)
    values, vectors = np.linalg.eigh(m)
    vectors = fix_phase(vectors.T)
    return [EigenPair(float(lam), vec) for lam, vec in zip(values, vectors)]


def eig_min_vector(m: np.ndarray) -> EigenPair:
    m = _check_hermitian(m)
    value, vec = min_eigvec(m)
    return EigenPair(float(value), vec)


def _gev_checked(a, b, largest: bool) -> EigenPair:
    a = _check_hermitian(a, "a")
    b = _check_hermitian(b, "b")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    solver = gev_max if largest else gev_min
    value, vec, singular = solver(a, b)
    if singular:
        raise SingularityError("b is not positive definite")
    return EigenPair(float(value), vec)


def gev_min_vector(a: np.ndarray, b: np.ndarray) -> EigenPair:
    """Generalized eigenvector of the smallest eigenvalue, scaled so ``v^H b v = 1``."""
    return _gev_checked(a, b, largest=False)


def gev_max_vector(a: np.ndarray, b: np.ndarray) -> EigenPair:
    """Generalized eigenvector of the largest eigenvalue, scaled so ``v^H b v = 1``."""
    return _gev_checked(a, b, largest=True)

"""Brute-force exact diagonalization of excitation sectors.

Ground truth for everything the root solver produces.  Built directly
from the ladder actions of a, a-dagger and the collective spin operators
on the basis |M-k> (x) |J, -J+k>, k = 0..K-1, so the module never touches
Bethe-side results (the two computational paths stay independent).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .bethe import SectorSpec

__all__ = [
    "ConvergenceFailure",
    "SectorMatrix",
    "sector_hamiltonian",
    "diagonalize",
    "oracle_F",
    "eigen_seed",
]


class ConvergenceFailure(Exception):
    """Eigensolver residual above tolerance."""


@dataclass(frozen=True)
class SectorMatrix:
    """Symmetric tridiagonal sector Hamiltonian (zero diagonal at resonance)."""

    spec: SectorSpec
    offdiag: tuple[float, ...]

    @property
    def dimension(self) -> int:
        return len(self.offdiag) + 1

    def dense(self) -> np.ndarray:
        off = np.asarray(self.offdiag)
        return np.diag(off, 1) + np.diag(off, -1)


def sector_hamiltonian(spec: SectorSpec) -> SectorMatrix:
    """Matrix of a'J- + J+a on the sector basis.

    The k -> k+1 coupling is sqrt((M-k)(2J-k)(k+1)): one photon absorbed,
    one collective excitation raised.
    """
    J2 = spec.n_atoms  # 2J
    M = spec.excitations
    K = spec.branch_count
    off = tuple(math.sqrt((M - k) * (J2 - k) * (k + 1)) for k in range(K - 1))
    return SectorMatrix(spec=spec, offdiag=off)


def diagonalize(matrix: SectorMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (columns)."""
    K = matrix.dimension
    diag = np.zeros(K)
    evals, evecs = eigh_tridiagonal(diag, np.asarray(matrix.offdiag))
    H = matrix.dense()
    res = np.max(np.abs(H @ evecs - evecs * evals)) if K > 1 else 0.0
    if res >= 1e-10:
        raise ConvergenceFailure(f"eigen residual {res:.3e}")
    return evals, evecs


def oracle_F(spec: SectorSpec, t) -> np.ndarray | float:
    """Number-state stored energy by direct state evolution.

    Evolves the k = 0 basis state under the sector matrix through its
    spectral decomposition and returns M - sum_k (M-k) |amp_k(t)|^2.
    Accepts a scalar or an array of times.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    M = spec.excitations
    if M == 0:
        out = np.zeros_like(t_arr)
        return out if np.ndim(t) else float(out[0])
    evals, evecs = diagonalize(sector_hamiltonian(spec))
    weights = evecs * evecs[0, :]  # (K, K): V[k,s] * V[0,s]
    phases = np.exp(-1j * np.outer(evals, t_arr))  # (K, T)
    amps = weights @ phases  # (K, T)
    photon = M - np.arange(evecs.shape[0], dtype=float)
    n_mean = photon @ (np.abs(amps) ** 2)
    out = M - n_mean
    return out if np.ndim(t) else float(out[0])


def eigen_seed(spec: SectorSpec) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition handed to the root solver for branch recovery.

    Returns (eigenvalues, eigenvectors); the solver reconstructs trial
    root sets from the eigenvector components.  Branches refined from
    these seeds are flagged oracle_seeded by the caller.
    """
    return diagonalize(sector_hamiltonian(spec))

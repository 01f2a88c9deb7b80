"""Inner-product algebra between unitary messages weighted by the spectrum.

Two encoding unitaries U_i, U_j are orthogonal with respect to a reduced
density matrix L when Tr(U_j L U_i^dagger) = 0; the encoded states are then
perfectly distinguishable.  This module provides the pairwise overlap, the
Gram matrix of a candidate message set, the sum-of-squares residual used as
the solver cost, and the cyclic-shift construction that certifies N = d
messages for every spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .serialize import matrices_from_json, matrices_to_json
from .spectra import LambdaMatrix, SchmidtSpectrum

UNITARITY_TOL = 1e-10


class MessageSetError(ValueError):
    """Invalid unitary message set."""


def _diagonal_of(lam) -> np.ndarray:
    """Accept a SchmidtSpectrum or LambdaMatrix and return its diagonal."""
    if isinstance(lam, SchmidtSpectrum):
        return lam.values
    if isinstance(lam, LambdaMatrix):
        return lam.diagonal
    arr = np.asarray(lam, dtype=float)
    if arr.ndim == 1:
        return arr
    raise TypeError("expected SchmidtSpectrum, LambdaMatrix, or 1-D array")


@dataclass(frozen=True, eq=False)
class UnitaryMessageSet:
    """N candidate encoding unitaries of shape (N, d, d).

    Searches produce sets with unitaries[0] = I (the identity gauge), but
    the container accepts any unitaries so gauge-transformed sets remain
    representable.
    """

    unitaries: np.ndarray

    def __post_init__(self):
        u = self.unitaries
        if u.ndim != 3 or u.shape[1] != u.shape[2]:
            raise MessageSetError("expected an (N, d, d) stack of matrices")
        n, d, _ = u.shape
        if n > d * d:
            raise MessageSetError(f"N={n} exceeds the operator-space dimension {d * d}")
        eye = np.eye(d)
        defect = np.abs(np.conj(u.transpose(0, 2, 1)) @ u - eye).max()
        if defect > UNITARITY_TOL:
            raise MessageSetError(f"unitarity defect {defect:.3e} exceeds {UNITARITY_TOL}")
        u.setflags(write=False)

    @property
    def n_messages(self) -> int:
        return self.unitaries.shape[0]

    @property
    def d(self) -> int:
        return self.unitaries.shape[1]

    def to_json(self) -> list:
        return matrices_to_json(self.unitaries)

    @classmethod
    def from_json(cls, items: list) -> "UnitaryMessageSet":
        return cls(np.array(matrices_from_json(items)))


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """Hermitian matrix of pairwise overlaps, labeled by what it records."""

    entries: np.ndarray
    label: str = "lambda-overlap"

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def max_offdiagonal(self) -> float:
        off = self.entries - np.diag(np.diagonal(self.entries))
        return float(np.abs(off).max()) if self.n > 1 else 0.0

    def hermiticity_defect(self) -> float:
        return float(np.abs(self.entries - self.entries.conj().T).max())


def lambda_inner(u_i: np.ndarray, u_j: np.ndarray, lam) -> complex:
    """Weighted overlap Tr(U_j L U_i^dagger).

    The index orientation is fixed once here; every Gram matrix in the
    package arranges entries[i][j] = lambda_inner(U_i, U_j, L).
    """
    diag = _diagonal_of(lam)
    u_i = np.asarray(u_i)
    u_j = np.asarray(u_j)
    if u_i.shape != u_j.shape or u_i.shape[-1] != diag.shape[0]:
        raise ValueError("dimension mismatch between unitaries and spectrum")
    return complex(np.einsum("ab,b,ab->", u_j, diag, np.conj(u_i)))


def weighted_flatten(unitaries: np.ndarray, diag: np.ndarray) -> np.ndarray:
    """Flatten each U into vec(U sqrt(L)); overlaps become plain dot products."""
    scaled = unitaries * np.sqrt(diag)[None, None, :]
    return scaled.reshape(unitaries.shape[0], -1)


def gram(message_set: UnitaryMessageSet, lam) -> GramMatrix:
    """Gram matrix G[i, j] = Tr(U_j L U_i^dagger); unit diagonal."""
    diag = _diagonal_of(lam)
    phi = weighted_flatten(message_set.unitaries, diag)
    return GramMatrix(np.conj(phi) @ phi.T)


def residual(message_set: UnitaryMessageSet, lam) -> float:
    """Sum of squared pairwise overlaps over i < j; zero iff orthogonal."""
    g = gram(message_set, lam).entries
    off = g - np.diag(np.diagonal(g))
    return float(np.sum(np.abs(off) ** 2) / 2.0)


def max_abs_overlap(message_set: UnitaryMessageSet, lam) -> float:
    """Largest pairwise overlap magnitude; the feasibility verdicts use this."""
    return gram(message_set, lam).max_offdiagonal()


def cyclic_shift(d: int) -> np.ndarray:
    """Permutation matrix X with X|n> = |n+1 mod d>."""
    x = np.zeros((d, d), dtype=complex)
    for n in range(d):
        x[(n + 1) % d, n] = 1.0
    return x


def shift_set(d: int, n_messages: int) -> UnitaryMessageSet:
    """Powers of the cyclic shift: exactly orthogonal for every spectrum.

    All cross overlaps Tr(X^s L X^t^dagger) with s != t vanish because
    X^(s-t) has a zero diagonal, so this certifies N <= d unconditionally.
    """
    if n_messages > d:
        raise MessageSetError(f"shift construction needs N <= d, got N={n_messages}, d={d}")
    if n_messages < 1:
        raise MessageSetError("need at least one message")
    x = cyclic_shift(d)
    mats = [np.eye(d, dtype=complex)]
    for _ in range(n_messages - 1):
        mats.append(x @ mats[-1])
    return UnitaryMessageSet(np.array(mats))

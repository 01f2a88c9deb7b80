"""Schmidt spectra and the bipartite states they describe.

A spectrum is the ordered list of Schmidt coefficients (squared amplitudes)
lambda_0 >= lambda_1 >= ... >= lambda_{d-1} >= 0 of a pure state shared
between two d-dimensional subsystems, normalized to sum to 1.  The reduced
density matrix of either half is the diagonal matrix built from these
values; every orthogonality computation in this package contracts against
it.  Ordering plus normalization force lambda_0 >= 1/d.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

# Constructors renormalize drift below this and reject anything larger.
NORMALIZATION_TOL = 1e-12
# Slack for detecting ordering/negativity violations caused by float noise.
ORDER_SLACK = 1e-12


class SpectrumError(ValueError):
    """Invalid Schmidt spectrum."""


class NotNormalized(SpectrumError):
    """Coefficients do not sum to 1 within tolerance."""


class NotSorted(SpectrumError):
    """Coefficients are not in non-increasing order."""


class NegativeCoefficient(SpectrumError):
    """A coefficient is negative beyond tolerance."""


@dataclass(frozen=True, eq=False)
class SchmidtSpectrum:
    """Ordered, normalized Schmidt coefficients of a d x d pure state."""

    values: np.ndarray

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def d(self) -> int:
        return len(self.values)

    @property
    def lambda0(self) -> float:
        return float(self.values[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, SchmidtSpectrum):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.array_equal(self.values, other.values)
        )

    def __hash__(self) -> int:
        return hash(self.values.tobytes())

    def __repr__(self) -> str:
        vals = ", ".join(f"{v:.6g}" for v in self.values)
        return f"SchmidtSpectrum([{vals}])"

    def to_json(self) -> str:
        """Serialize as a JSON array of reals, descending order."""
        return json.dumps([float(v) for v in self.values])

    @classmethod
    def from_json(cls, text: str) -> "SchmidtSpectrum":
        return make_spectrum(json.loads(text))


@dataclass(frozen=True, eq=False)
class LambdaMatrix:
    """Diagonal reduced density matrix of the shared state."""

    entries: np.ndarray

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def d(self) -> int:
        return self.entries.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.real(np.diagonal(self.entries))


@dataclass(frozen=True, eq=False)
class BipartiteState:
    """Coefficient matrix c with c[n, n] = sqrt(lambda_n), zero elsewhere.

    Flattening c row-major gives the state vector in the product basis
    |a>|b> -> index a*d + b; the reduced density matrix is c @ c^dagger.
    """

    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients.setflags(write=False)

    @property
    def d(self) -> int:
        return self.coefficients.shape[0]

    @property
    def vector(self) -> np.ndarray:
        return self.coefficients.ravel()


def make_spectrum(values) -> SchmidtSpectrum:
    """Validate a list of reals as an ordered, normalized Schmidt spectrum.

    Raises NotSorted / NegativeCoefficient / NotNormalized rather than
    silently repairing, except for sub-1e-12 normalization drift which is
    renormalized away.  Values must already be in non-increasing order:
    sorting on behalf of the caller would silently relabel the coordinates
    of the phase diagram.
    """
    arr = np.asarray(values, dtype=float).copy()
    if arr.ndim != 1 or arr.size == 0:
        raise SpectrumError("spectrum must be a non-empty 1-D list of reals")
    if np.any(arr < -ORDER_SLACK):
        raise NegativeCoefficient(f"negative coefficient in {arr.tolist()}")
    arr = np.maximum(arr, 0.0)
    if np.any(np.diff(arr) > ORDER_SLACK):
        raise NotSorted(f"coefficients must be non-increasing, got {arr.tolist()}")
    total = arr.sum()
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise NotNormalized(f"coefficients sum to {total!r}, expected 1")
    return SchmidtSpectrum(arr / total)


def mes(d: int) -> SchmidtSpectrum:
    """Maximally entangled spectrum: all d coefficients equal to 1/d."""
    if d < 2:
        raise SpectrumError("maximally entangled state needs dimension >= 2")
    return SchmidtSpectrum(np.full(d, 1.0 / d))


def product_state(d: int) -> SchmidtSpectrum:
    """Rank-one corner of the ordered simplex: (1, 0, ..., 0)."""
    if d < 1:
        raise SpectrumError("dimension must be positive")
    values = np.zeros(d)
    values[0] = 1.0
    return SchmidtSpectrum(values)


def lambda_matrix(s: SchmidtSpectrum) -> LambdaMatrix:
    """Diagonal matrix with the spectrum on the diagonal (trace 1)."""
    return LambdaMatrix(np.diag(s.values).astype(complex))


def state_coefficients(s: SchmidtSpectrum) -> BipartiteState:
    """Coefficient matrix diag(sqrt(lambda_n)) of the shared pure state."""
    return BipartiteState(np.diag(np.sqrt(s.values)).astype(complex))

"""Structural diagnostics behind the corner infeasibility results.

When the largest m Schmidt coefficients are all equal, stacking the first m
columns of each message unitary into one unit vector turns orthogonality
into a statement about a Gram matrix of N vectors living in only m*d
dimensions.  For N = m*d + 1 that Gram matrix is forced to be singular, and
eigenvalue-localization regions (disks from partial row sums, subset
regions from full row sums) pin its off-diagonal magnitudes at exactly
1/(m*d) when lambda_0 = d/N, which collapses every message to a block form
too small to hold N independent unitaries.  This module computes each
ingredient numerically so solver output can be audited against that chain
of constraints.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .orthogonality import GramMatrix, UnitaryMessageSet
from .spectra import SchmidtSpectrum, make_spectrum
from .unitary_solver import FeasibilityReport, SolverConfig, find_messages

RANK_SV_CUTOFF = 1e-8


def reshape_phi(u: np.ndarray, m: int):
    """Stack the first m columns of U into one vector; scale the rest.

    Returns (phi0, [phi_m, ..., phi_{d-1}]): phi0 holds column 0 entries,
    then column 1, and so on, divided by sqrt(m) so it is a unit vector;
    each remaining column k gets the same scaling and squared norm 1/m.
    """
    u = np.asarray(u)
    d = u.shape[0]
    if not 1 <= m < d:
        raise ValueError(f"m must lie in 1..{d - 1}, got {m}")
    scale = 1.0 / np.sqrt(m)
    phi0 = u[:, :m].T.reshape(-1) * scale
    phik = [u[:, k] * scale for k in range(m, d)]
    return phi0, phik


def phi_matrix(message_set: UnitaryMessageSet, m: int) -> np.ndarray:
    """Stacked-column unit vectors for every message, shape (N, m*d)."""
    u = message_set.unitaries
    d = u.shape[1]
    if not 1 <= m < d:
        raise ValueError(f"m must lie in 1..{d - 1}, got {m}")
    return u[:, :, :m].transpose(0, 2, 1).reshape(len(u), m * d) / np.sqrt(m)


def overlap_bound(m: int, lambda0: float) -> float:
    """Upper bound (1 - m*lambda0) / (m*lambda0) on stacked-column overlaps."""
    x = m * lambda0
    if not 0 < x <= 1 + 1e-12:
        raise ValueError(f"m*lambda0 must lie in (0, 1], got {x}")
    return max(0.0, (1.0 - x) / x)


@dataclass(frozen=True)
class PhiGramReport:
    """Gram matrix of stacked-column vectors plus concentration statistics."""

    gram: GramMatrix
    m: int
    target: float                  # 1 / (m*d)
    min_offdiagonal: float
    max_offdiagonal: float
    max_deviation: float           # max | |G_ij| - target | over i != j
    rank: int
    smallest_singular_value: float

    def to_json_dict(self) -> dict:
        return {
            "kind": "phi_gram_report",
            "m": self.m,
            "target": self.target,
            "min_offdiagonal": self.min_offdiagonal,
            "max_offdiagonal": self.max_offdiagonal,
            "max_deviation": self.max_deviation,
            "rank": self.rank,
            "smallest_singular_value": self.smallest_singular_value,
        }


def lemma_overlaps(message_set: UnitaryMessageSet, m: int) -> PhiGramReport:
    """Gram matrix of the stacked-column vectors with summary statistics.

    For sets of more than m*d vectors the Gram matrix is necessarily rank
    deficient; the rank estimate uses a fixed singular-value cutoff.  The
    off-diagonal statistics are zero for single-message sets.
    """
    phi = phi_matrix(message_set, m)
    n, dim = phi.shape
    g = np.conj(phi) @ phi.T
    d = message_set.d
    target = 1.0 / (m * d)
    if n > 1:
        mask = ~np.eye(n, dtype=bool)
        mags = np.abs(g[mask])
        min_off = float(mags.min())
        max_off = float(mags.max())
        max_dev = float(np.abs(mags - target).max())
    else:
        min_off = max_off = max_dev = 0.0
    sv = np.linalg.svd(g, compute_uv=False)
    rank = int(np.sum(sv > RANK_SV_CUTOFF))
    return PhiGramReport(
        gram=GramMatrix(g, label="phi0-overlap"),
        m=m,
        target=target,
        min_offdiagonal=min_off,
        max_offdiagonal=max_off,
        max_deviation=max_dev,
        rank=rank,
        smallest_singular_value=float(sv.min()),
    )


@dataclass(frozen=True)
class BrualdiVerdict:
    """Whether a point is inside the eigenvalue-localization sets of order r."""

    r: int
    covered_by_disks: bool
    covered_by_region: bool
    witness_set: tuple
    margin: float

    @property
    def covered(self) -> bool:
        return self.covered_by_disks or self.covered_by_region


def brualdi_covers(a: np.ndarray, r: int, z: complex) -> BrualdiVerdict:
    """Test z against the order-r localization sets of matrix A.

    Disk test: |z - a_ii| <= sum of the r-1 largest off-diagonal magnitudes
    of row i, for some i.  Region test: some index set P of size r has
    sum_{i in P} |z - a_ii| <= sum_{i in P} R_i with R_i the full row sum;
    satisfiability reduces to the r smallest values of |z - a_ii| - R_i,
    which is exact and avoids enumerating all subsets.  The margin is
    positive when covered with room to spare, negative when outside.
    """
    a = np.asarray(a, dtype=complex)
    n = a.shape[0]
    if a.ndim != 2 or a.shape[1] != n:
        raise ValueError("expected a square matrix")
    if not 1 <= r <= n:
        raise ValueError(f"r must lie in 1..{n}, got {r}")
    off = np.abs(a).astype(float)
    np.fill_diagonal(off, 0.0)
    dist = np.abs(z - np.diagonal(a))
    sorted_rows = np.sort(off, axis=1)[:, ::-1]
    partial = sorted_rows[:, : r - 1].sum(axis=1)
    disk_margins = partial - dist
    radii = off.sum(axis=1)
    gaps = dist - radii
    order = np.argsort(gaps, kind="stable")
    chosen = order[:r]
    region_sum = float(gaps[chosen].sum())
    margin = float(max(disk_margins.max(), -region_sum))
    return BrualdiVerdict(
        r=r,
        covered_by_disks=bool(np.any(disk_margins >= 0.0)),
        covered_by_region=region_sum <= 0.0,
        witness_set=tuple(sorted(int(i) for i in chosen)),
        margin=margin,
    )


def _nearest_unitary(a: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(a)
    return u @ vh


def block_form_deviation(u: np.ndarray, m: int) -> float:
    """Max-norm distance of U from block-diag(v, phase * identity).

    v ranges over all m x m unitaries (approximated by the polar-nearest
    unitary to the top-left block) and the trailing phase is optimized.
    Zero exactly for matrices already of that form.
    """
    u = np.asarray(u, dtype=complex)
    d = u.shape[0]
    if not 1 <= m < d:
        raise ValueError(f"m must lie in 1..{d - 1}, got {m}")
    top = u[:m, :m]
    fixed = max(
        float(np.abs(u[:m, m:]).max()),
        float(np.abs(u[m:, :m]).max()),
        float(np.abs(top - _nearest_unitary(top)).max()),
    )
    trailing = u[m:, m:]
    trail_off = trailing - np.diag(np.diagonal(trailing))
    fixed = max(fixed, float(np.abs(trail_off).max()) if d - m > 1 else 0.0)
    w = np.diagonal(trailing)

    def phase_dev(theta: float) -> float:
        return float(np.abs(w - np.exp(1j * theta)).max())

    grid = np.linspace(-np.pi, np.pi, 512, endpoint=False)
    candidates = np.concatenate([grid, np.angle(w), [np.angle(w.sum() + 1e-300)]])
    values = [phase_dev(t) for t in candidates]
    best = candidates[int(np.argmin(values))]
    step = 2 * np.pi / 512
    res = minimize_scalar(phase_dev, bounds=(best - step, best + step),
                          method="bounded", options={"xatol": 1e-12})
    best_dev = min(min(values), float(res.fun))
    return max(fixed, best_dev)


def corner_spectrum(d: int, m: int) -> SchmidtSpectrum:
    """Top-m coefficients equal to d/(m*d + 1), tail split equally."""
    if not 1 <= m < d:
        raise ValueError(f"m must lie in 1..{d - 1}, got {m}")
    n = m * d + 1
    head = d / n
    tail = (1.0 - m * head) / (d - m)
    return make_spectrum([head] * m + [tail] * (d - m))


@dataclass(frozen=True)
class Theorem1Report:
    """Search floor and structure diagnostics at an equal-top-m corner."""

    d: int
    m: int
    n_messages: int
    spectrum: SchmidtSpectrum
    search: FeasibilityReport
    phi_stats: Optional[PhiGramReport]
    block_deviations: Optional[np.ndarray]
    overlap_histogram: Optional[tuple]
    brualdi_margins: Optional[tuple]

    def to_json_dict(self) -> dict:
        hist = None
        if self.overlap_histogram is not None:
            counts, edges = self.overlap_histogram
            hist = {"counts": [int(c) for c in counts],
                    "edges": [float(e) for e in edges]}
        return {
            "kind": "theorem1_audit",
            "d": self.d,
            "m": self.m,
            "N": self.n_messages,
            "spectrum": [float(v) for v in self.spectrum.values],
            "search": self.search.to_json_dict(),
            "phi_stats": None if self.phi_stats is None else self.phi_stats.to_json_dict(),
            "block_deviations": None if self.block_deviations is None
            else [float(b) for b in self.block_deviations],
            "overlap_histogram": hist,
            "brualdi_margins": None if self.brualdi_margins is None
            else [float(v) for v in self.brualdi_margins],
            "candidate": None if self.search.best_candidate is None
            else self.search.best_candidate.to_json(),
        }


def theorem1_audit(d: int, m: int, cfg: SolverConfig | None = None,
                   spectrum: SchmidtSpectrum | None = None) -> Theorem1Report:
    """Probe N = m*d + 1 messages at the equal-top-m corner spectrum.

    The search is expected to come back infeasible with a clear residual
    floor; the report attaches the stacked-column overlap statistics, the
    localization margins of their Gram matrix at the forced zero
    eigenvalue, and the per-message block-form deviations of the best
    candidate found.
    """
    cfg = cfg or SolverConfig()
    if spectrum is None:
        spectrum = corner_spectrum(d, m)
    n = m * d + 1
    rep = find_messages(spectrum, n, cfg)
    candidate = rep.best_candidate
    if candidate is None:
        return Theorem1Report(d, m, n, spectrum, rep, None, None, None, None)
    stats = lemma_overlaps(candidate, m)
    devs = np.array([block_form_deviation(u, m) for u in candidate.unitaries])
    g = stats.gram.entries
    n_set = g.shape[0]
    mask = ~np.eye(n_set, dtype=bool)
    hist = np.histogram(np.abs(g[mask]), bins=20)
    margins = tuple(brualdi_covers(g, r, 0.0).margin for r in range(1, n_set + 1))
    return Theorem1Report(d, m, n, spectrum, rep, stats, devs,
                          (hist[0], hist[1]), margins)

"""Sweeps of the ordered Schmidt simplex and boundary localization.

The maximal alphabet is constant on regions of spectrum space that nest
around the maximally entangled point, so boundaries are found two ways:
grid sweeps (every lattice point of the ordered simplex gets a maximal
alphabet) and bisection along rays from the maximally entangled point
toward the simplex boundary.  Grid results are monitored for monotonicity
along lattice rays; violations are treated as solver misses and retried
with escalated restarts before being recorded as anomalies.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .serialize import dumps, read_json
from .spectra import SchmidtSpectrum, make_spectrum, mes
from .unitary_solver import FeasibilityReport, SolverConfig, find_messages, max_alphabet


class BracketError(ValueError):
    """Bisection requires a feasible start and an infeasible end."""


@dataclass(frozen=True)
class Ray:
    """Segment through spectrum space, linear in the coefficients."""

    start: SchmidtSpectrum
    end: SchmidtSpectrum

    def __post_init__(self):
        if self.start.d != self.end.d:
            raise ValueError("ray endpoints must share a dimension")

    def at(self, t: float) -> SchmidtSpectrum:
        """Convexity of the ordered simplex keeps every point valid."""
        values = (1.0 - t) * self.start.values + t * self.end.values
        return make_spectrum(values)


def ray_from_mes(end: SchmidtSpectrum) -> Ray:
    return Ray(mes(end.d), end)


@dataclass(frozen=True)
class GridPoint:
    spectrum: SchmidtSpectrum
    max_n: int
    residual_by_n: dict

    def to_json_dict(self) -> dict:
        return {
            "spectrum": [float(v) for v in self.spectrum.values],
            "max_n": self.max_n,
            "residual_by_n": {str(k): v for k, v in sorted(self.residual_by_n.items())},
        }


@dataclass(frozen=True)
class PhaseDiagram:
    d: int
    resolution: Optional[int]
    points: tuple
    boundaries: dict
    anomalies: tuple

    def to_json_dict(self) -> dict:
        return {
            "kind": "phase_diagram",
            "d": self.d,
            "resolution": self.resolution,
            "points": [p.to_json_dict() for p in self.points],
            "boundaries": {
                str(n): [[float(v) for v in s.values] for s in specs]
                for n, specs in sorted(self.boundaries.items())
            },
            "anomalies": [
                [[float(v) for v in a.values], [float(v) for v in b.values]]
                for a, b in self.anomalies
            ],
        }


def _partition_tuples(total: int, parts: int, cap: int):
    if parts == 1:
        if total <= cap:
            yield (total,)
        return
    low = math.ceil(total / parts)
    for first in range(min(total, cap), low - 1, -1):
        for rest in _partition_tuples(total - first, parts - 1, first):
            yield (first,) + rest


def ordered_simplex_grid(d: int, resolution: int) -> list:
    """All spectra with coefficients k_i / resolution, ordered, deduplicated."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    out = []
    for combo in _partition_tuples(resolution, d, resolution):
        out.append(make_spectrum(np.array(combo, dtype=float) / resolution))
    return out


def _evaluate_point(values: np.ndarray, cfg: SolverConfig):
    spectrum = make_spectrum(values)
    best_n, reports = max_alphabet(spectrum, cfg)
    residuals = {rep.n_messages: rep.best_residual for rep in reports}
    return best_n, residuals


def _evaluate_point_args(args):
    return _evaluate_point(*args)


def _integer_coords(spectrum: SchmidtSpectrum, resolution: int) -> tuple:
    return tuple(int(round(v * resolution)) for v in spectrum.values)


def _ray_families(coords: list, d: int, resolution: int) -> dict:
    """Group lattice points by their integer direction from the center."""
    families = {}
    for idx, k in enumerate(coords):
        v = tuple(d * ki - resolution for ki in k)
        if all(x == 0 for x in v):
            continue
        g = math.gcd(*(abs(x) for x in v if x != 0))
        direction = tuple(x // g for x in v)
        families.setdefault(direction, []).append((g, idx))
    return {k: sorted(v) for k, v in families.items() if len(v) > 1}


def map_diagram(d: int, grid: list, cfg: SolverConfig | None = None,
                resolution: Optional[int] = None) -> PhaseDiagram:
    """Maximal alphabet at every grid point, with boundary extraction.

    Points on a common lattice ray from the maximally entangled point must
    have non-increasing alphabets moving outward; a violation is re-run
    once with escalated restarts, and recorded as an anomaly if it stands.
    """
    cfg = cfg or SolverConfig()
    jobs = [(s.values, cfg) for s in grid]
    if cfg.parallelism > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.parallelism) as pool:
            outcomes = list(pool.map(_evaluate_point_args, jobs))
    else:
        outcomes = [_evaluate_point(*job) for job in jobs]
    max_n = [o[0] for o in outcomes]
    residuals = [o[1] for o in outcomes]

    inferred = resolution if resolution is not None else _infer_resolution(grid)
    anomalies = []
    if inferred is not None and inferred % d == 0:
        coords = [_integer_coords(s, inferred) for s in grid]
        escalated = replace(cfg, restarts=cfg.restarts * cfg.escalation_factor)
        for _direction, members in _ray_families(coords, d, inferred).items():
            for (t_near, i_near), (t_far, i_far) in zip(members, members[1:]):
                if max_n[i_far] > max_n[i_near]:
                    best_n, res = _evaluate_point(grid[i_near].values, escalated)
                    max_n[i_near], residuals[i_near] = best_n, res
                    if max_n[i_far] > max_n[i_near]:
                        anomalies.append((grid[i_near], grid[i_far]))

    points = tuple(
        GridPoint(s, n, r) for s, n, r in zip(grid, max_n, residuals)
    )
    boundaries = _extract_boundaries(points, inferred)
    return PhaseDiagram(d=d, resolution=inferred, points=points,
                        boundaries=boundaries, anomalies=tuple(anomalies))


def _infer_resolution(grid: list) -> Optional[int]:
    if not grid:
        return None
    for res in range(2, 4097):
        ok = True
        for s in grid[: min(len(grid), 8)]:
            scaled = s.values * res
            if np.abs(scaled - np.round(scaled)).max() > 1e-9:
                ok = False
                break
        if ok:
            return res
    return None


def _extract_boundaries(points: tuple, resolution: Optional[int]) -> dict:
    """Feasible-side frontier spectra for each alphabet drop N -> N-1."""
    if resolution is None:
        return {}
    index = {}
    for i, p in enumerate(points):
        index[_integer_coords(p.spectrum, resolution)] = i
    boundaries = {}
    d = points[0].spectrum.d if points else 0
    for coords, i in index.items():
        p = points[i]
        for a in range(d):
            for b in range(d):
                if a == b:
                    continue
                k = list(coords)
                k[a] += 1
                k[b] -= 1
                neighbor = index.get(tuple(k))
                if neighbor is None:
                    continue
                q = points[neighbor]
                for n in range(q.max_n + 1, p.max_n + 1):
                    boundaries.setdefault(n, [])
                    if p.spectrum not in boundaries[n]:
                        boundaries[n].append(p.spectrum)
    return {n: tuple(v) for n, v in sorted(boundaries.items())}


@dataclass(frozen=True)
class BisectionResult:
    spectrum: SchmidtSpectrum
    t_lo: float
    t_hi: float
    lo_report: FeasibilityReport
    hi_report: FeasibilityReport

    @property
    def lambda0(self) -> float:
        return self.spectrum.lambda0


def boundary_bisect(ray: Ray, n_messages: int, tol: float,
                    cfg: SolverConfig | None = None) -> BisectionResult:
    """Bisect a feasible-to-infeasible ray until lambda_0 is pinned to tol.

    The witness from the feasible side of the bracket warm-starts the next
    query, which keeps near-boundary feasibility checks fast and reliable;
    every verdict still runs the usual cold restarts if the warm start
    fails.
    """
    cfg = cfg or SolverConfig()
    rep_lo = find_messages(ray.at(0.0), n_messages, cfg)
    if not rep_lo.feasible:
        raise BracketError("ray start must be feasible for the requested N")
    rep_hi = find_messages(ray.at(1.0), n_messages, cfg)
    if rep_hi.feasible:
        raise BracketError("ray end must be infeasible for the requested N")
    span = abs(ray.end.lambda0 - ray.start.lambda0)
    lo, hi = 0.0, 1.0
    witness = rep_lo.witness

    def width() -> float:
        return (hi - lo) * span if span > 1e-15 else (hi - lo)

    while width() > tol:
        mid = 0.5 * (lo + hi)
        warm = (witness,) if witness is not None else ()
        rep = find_messages(ray.at(mid), n_messages, cfg, warm_starts=warm)
        if rep.feasible:
            lo, rep_lo, witness = mid, rep, rep.witness
        else:
            hi, rep_hi = mid, rep
    return BisectionResult(
        spectrum=ray.at(0.5 * (lo + hi)),
        t_lo=lo,
        t_hi=hi,
        lo_report=rep_lo,
        hi_report=rep_hi,
    )


def export_diagram(diagram: PhaseDiagram, path, fmt: str = "csv") -> None:
    """Write plot-ready data; CSV carries points only, JSON everything."""
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            d = diagram.d
            writer.writerow([f"lambda{i}" for i in range(d)] + ["max_n"])
            for p in diagram.points:
                writer.writerow([repr(float(v)) for v in p.spectrum.values] + [p.max_n])
    elif fmt == "json":
        with open(path, "w") as fh:
            fh.write(dumps(diagram.to_json_dict()))
            fh.write("\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def import_diagram(path, fmt: str = "csv") -> PhaseDiagram:
    """Inverse of export_diagram; CSV round-trips points exactly."""
    if fmt == "csv":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        d = len(header) - 1
        points = []
        for row in rows[1:]:
            spectrum = make_spectrum([float(x) for x in row[:d]])
            points.append(GridPoint(spectrum, int(row[d]), {}))
        return PhaseDiagram(d=d, resolution=_infer_resolution([p.spectrum for p in points]),
                            points=tuple(points), boundaries={}, anomalies=())
    if fmt == "json":
        data = read_json(path)
        points = tuple(
            GridPoint(make_spectrum(item["spectrum"]), int(item["max_n"]),
                      {int(k): v for k, v in item["residual_by_n"].items()})
            for item in data["points"]
        )
        boundaries = {
            int(n): tuple(make_spectrum(s) for s in specs)
            for n, specs in data["boundaries"].items()
        }
        anomalies = tuple(
            (make_spectrum(a), make_spectrum(b)) for a, b in data["anomalies"]
        )
        return PhaseDiagram(d=int(data["d"]), resolution=data["resolution"],
                            points=points, boundaries=boundaries, anomalies=anomalies)
    raise ValueError(f"unknown format {fmt!r}")

"""Derivative-free recovery of a sphere from phaseless far-field data.

The unknowns are the center and radius of one PEC sphere placed in a scene
that may also contain a known reference ball.  The least-squares misfit over
the phaseless records is minimized by a Nelder-Mead simplex search.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import COMPONENTS, Incident, MeasurementGrid, PhaselessRecord, frame_at
from .errors import BudgetExceeded, GeometryError
from .mie import SphereObstacle
from .scene import FarFieldFn, Scene, SolverSpec, far_field_model, incident_waves, phaseless_data

log = logging.getLogger(__name__)

PENALTY = 1e6
QUANTUM = 1e-6


@dataclass(frozen=True)
class SphereParams:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise GeometryError("radius must be positive")

    @classmethod
    def from_vector(cls, v) -> "SphereParams":
        v = np.asarray(v, dtype=float)
        return cls(tuple(v[:3]), float(v[3]))

    def as_vector(self) -> np.ndarray:
        return np.array([*self.center, self.radius])

    def sphere(self, like: SphereObstacle | None = None) -> SphereObstacle:
        if like is None:
            return SphereObstacle(self.center, self.radius)
        return SphereObstacle(self.center, self.radius, like.bc)

    def errors(self, truth: "SphereParams") -> tuple[float, float]:
        """(||center - truth||, |radius - truth|)."""
        dc = np.linalg.norm(np.subtract(self.center, truth.center))
        return float(dc), abs(self.radius - truth.radius)


@dataclass(frozen=True, eq=False)
class ObservedData:
    """Phaseless records in canonical order, with shared direction/incident tables."""

    directions: np.ndarray  # (n_dirs, 3)
    incidents: tuple[Incident, ...]
    dir_index: np.ndarray
    inc_index: np.ndarray
    m_index: np.ndarray  # 0 = phi, 1 = theta
    values: np.ndarray

    @property
    def n_records(self) -> int:
        return len(self.values)

    @classmethod
    def from_table(cls, grid: MeasurementGrid, incidents, table: np.ndarray) -> "ObservedData":
        """From an array (n_dirs, n_inc, 2) laid out like ``phaseless_data``."""
        nd, ni, nm = table.shape
        D, I, Mi = np.meshgrid(np.arange(nd), np.arange(ni), np.arange(nm), indexing="ij")
        return cls(grid.directions(), tuple(incidents), D.ravel(), I.ravel(), Mi.ravel(),
                   np.asarray(table, dtype=float).ravel())

    @classmethod
    def from_records(cls, records: Sequence[PhaselessRecord]) -> "ObservedData":
        """Collect records; the result does not depend on their order."""
        recs = sorted(records, key=lambda r: r.key())
        dirs: dict = {}
        incs: dict = {}
        di, ii, mi, vals = [], [], [], []
        for r in recs:
            di.append(dirs.setdefault(r.xhat, len(dirs)))
            ii.append(incs.setdefault((r.d1, r.d2, r.p1, r.p2), len(incs)))
            mi.append(COMPONENTS.index(r.m))
            vals.append(r.value)
        return cls(
            np.array(list(dirs), dtype=float).reshape(-1, 3),
            tuple(Incident(*k) for k in incs),
            np.array(di, dtype=int),
            np.array(ii, dtype=int),
            np.array(mi, dtype=int),
            np.array(vals, dtype=float),
        )

    def records(self) -> list[PhaselessRecord]:
        out = []
        for d, i, m, v in zip(self.dir_index, self.inc_index, self.m_index, self.values):
            inc = self.incidents[i]
            out.append(PhaselessRecord(tuple(self.directions[d]), inc.d1, inc.d2, inc.p1, inc.p2,
                                       COMPONENTS[m], float(v)))
        return out

    def simulate(self, model: FarFieldFn) -> np.ndarray:
        """Values predicted by a far-field model at the same record indices."""
        waves, idx = incident_waves(self.incidents)
        fields = model(self.directions, waves)
        total = fields[:, idx[:, 0]] + fields[:, idx[:, 1]]  # (n_dirs, n_inc, 3)
        e_phi, e_theta = frame_at(self.directions)
        frames = np.stack([e_phi, e_theta], axis=1)  # (n_dirs, 2, 3)
        vals = np.einsum("xmd,xjd->xjm", frames, total)
        return np.abs(vals[self.dir_index, self.inc_index, self.m_index])


@dataclass(frozen=True)
class Misfit:
    value: float
    n_records: int


def misfit(
    params: SphereParams,
    observed: ObservedData,
    template: Scene,
    solver: SolverSpec,
) -> Misfit:
    """Sum of squared differences between simulated and observed records.

    ``template`` supplies the wavenumber, the reference ball and B_R; its
    obstacle list is replaced by the trial sphere.
    """
    like = template.obstacles[0] if template.obstacles else None
    scene = template.with_obstacles([params.sphere(like)])
    model = far_field_model(scene, solver)
    sim = observed.simulate(model)
    r = sim - observed.values
    return Misfit(float(np.dot(r, r)), observed.n_records)


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    n_evals: int
    n_iter: int
    reason: str
    trace: list = field(default_factory=list)  # (eval index, f, x)

    @property
    def flagged(self) -> bool:
        return self.reason == "budget"


def nelder_mead(
    f: Callable[[np.ndarray], float],
    x0,
    step=0.1,
    simplex=None,
    xtol: float = 1e-4,
    ftol: float = 1e-12,
    max_evals: int = 1000,
) -> NelderMeadResult:
    """Minimize ``f`` with the standard simplex moves (1, 2, 1/2, 1/2).

    Stops as soon as the simplex diameter drops below ``xtol``, the spread
    of function values below ``ftol``, or ``max_evals`` evaluations are used.
    Running out of budget emits :class:`BudgetExceeded` and returns the best
    point so far with ``reason == "budget"``.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    if simplex is None:
        steps = np.broadcast_to(np.asarray(step, dtype=float), (n,))
        simplex = np.vstack([x0, x0 + np.diag(steps)])
    S = np.array(simplex, dtype=float)
    if S.shape != (n + 1, n):
        raise ValueError("initial simplex must have n + 1 vertices")
    trace: list = []

    def call(x):
        v = float(f(x))
        trace.append((len(trace), v, x.copy()))
        return v

    F = np.empty(n + 1)
    for i in range(n + 1):
        F[i] = call(S[i])
    if not np.all(np.isfinite(F)):
        raise ValueError("objective not finite on the initial simplex")
    it = 0
    reason = "budget"
    while True:
        order = np.argsort(F, kind="stable")
        S, F = S[order], F[order]
        diam = max(np.linalg.norm(S[i] - S[j]) for i in range(n + 1) for j in range(i + 1, n + 1))
        if diam < xtol:
            reason = "xtol"
            break
        if F[-1] - F[0] < ftol:
            reason = "ftol"
            break
        if len(trace) >= max_evals:
            break
        it += 1
        c = S[:-1].mean(axis=0)
        xr = c + (c - S[-1])
        fr = call(xr)
        if fr < F[0]:
            xe = c + 2 * (xr - c)
            fe = call(xe) if len(trace) < max_evals else np.inf
            S[-1], F[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < F[-2]:
            S[-1], F[-1] = xr, fr
        elif len(trace) >= max_evals:
            if fr < F[-1]:
                S[-1], F[-1] = xr, fr
        else:
            if fr < F[-1]:
                xc = c + 0.5 * (xr - c)
                fc = call(xc)
                accept = fc <= fr
            else:
                xc = c + 0.5 * (S[-1] - c)
                fc = call(xc)
                accept = fc < F[-1]
            if accept:
                S[-1], F[-1] = xc, fc
            else:
                for i in range(1, n + 1):
                    if len(trace) >= max_evals:
                        break
                    S[i] = S[0] + 0.5 * (S[i] - S[0])
                    F[i] = call(S[i])
    best = int(np.argmin(F))
    if reason == "budget":
        warnings.warn(f"simplex search stopped after {len(trace)} evaluations", BudgetExceeded,
                      stacklevel=2)
    return NelderMeadResult(S[best].copy(), float(F[best]), len(trace), it, reason, trace)


class CachedObjective:
    """Penalized misfit with a forward-solve cache on a 1e-6 parameter grid."""

    def __init__(self, observed: ObservedData, template: Scene, solver: SolverSpec):
        self.observed = observed
        self.template = template
        self.solver = solver
        self.cache: dict = {}
        self.n_solves = 0

    def __call__(self, v) -> float:
        key = tuple(np.round(np.asarray(v, dtype=float) / QUANTUM).astype(np.int64))
        if key not in self.cache:
            self.cache[key] = self._evaluate(np.asarray(key) * QUANTUM)
        return self.cache[key]

    def _evaluate(self, v) -> float:
        try:
            params = SphereParams.from_vector(v)
            like = self.template.obstacles[0] if self.template.obstacles else None
            self.template.with_obstacles([params.sphere(like)]).check_geometry()
        except GeometryError:
            return PENALTY
        self.n_solves += 1
        return misfit(params, self.observed, self.template, self.solver).value


@dataclass
class ReconstructionResult:
    params: SphereParams
    misfit: float
    n_evals: int
    n_solves: int
    reason: str
    trace: list
    center_error: float | None = None
    radius_error: float | None = None

    def as_dict(self) -> dict:
        return {
            "center": list(self.params.center),
            "radius": self.params.radius,
            "misfit": self.misfit,
            "n_evals": self.n_evals,
            "n_solves": self.n_solves,
            "reason": self.reason,
            "center_error": self.center_error,
            "radius_error": self.radius_error,
        }


def reconstruct_sphere(
    observed: ObservedData,
    template: Scene,
    init: SphereParams,
    solver: SolverSpec = SolverSpec(),
    truth: SphereParams | None = None,
    step: float = 0.1,
    xtol: float = 1e-4,
    ftol: float = 1e-12,
    max_evals: int = 300,
) -> ReconstructionResult:
    obj = CachedObjective(observed, template, solver)
    res = nelder_mead(obj, init.as_vector(), step=step, xtol=xtol, ftol=ftol, max_evals=max_evals)
    params = SphereParams.from_vector(res.x)
    out = ReconstructionResult(params, res.fun, res.n_evals, obj.n_solves, res.reason, res.trace)
    if truth is not None:
        out.center_error, out.radius_error = params.errors(truth)
    log.info("reconstruction stopped (%s) after %d evaluations", res.reason, res.n_evals)
    return out


def superposition_incidents(incidents: Sequence[Incident]) -> list[Incident]:
    return [i for i in incidents if not i.is_single_wave]


def single_wave_incidents(incidents: Sequence[Incident]) -> list[Incident]:
    """The first wave of each incident, alone."""
    return [Incident.single(i.d1, i.p1) for i in incidents]


@dataclass
class ScanResult:
    shifts: np.ndarray
    values: np.ndarray
    direction: np.ndarray

    def curvature(self) -> float:
        """Second difference at zero shift from the three samples nearest 0."""
        i = int(np.argmin(np.abs(self.shifts)))
        if i == 0 or i == len(self.shifts) - 1:
            raise ValueError("scan must bracket zero shift")
        h1 = self.shifts[i] - self.shifts[i - 1]
        h2 = self.shifts[i + 1] - self.shifts[i]
        f0, fm, fp = self.values[i], self.values[i - 1], self.values[i + 1]
        return float(2 * (fp * h1 + fm * h2 - f0 * (h1 + h2)) / (h1 * h2 * (h1 + h2)))


def ambiguity_scan(
    truth: SphereObstacle,
    template: Scene,
    incidents: Sequence[Incident],
    grid: MeasurementGrid,
    direction,
    shifts,
    solver: SolverSpec | None = None,
) -> ScanResult:
    """Misfit of the truth translated by s * direction for each shift s.

    Observed data are generated by the same forward model as the scan, so the
    curve isolates the data's sensitivity to translation.  Without a reference
    ball the series solver is used and, for single plane waves, the curve is
    flat up to rounding.
    """
    if solver is None:
        solver = SolverSpec(kind="mie" if template.reference_ball is None else "efie")
    t = np.asarray(direction, dtype=float)
    t = t / np.linalg.norm(t)
    scene = template.with_obstacles([truth])
    table = phaseless_data(scene, solver, grid, incidents)
    observed = ObservedData.from_table(grid, incidents, table)
    shifts = np.asarray(shifts, dtype=float)
    vals = np.empty(len(shifts))
    for i, s in enumerate(shifts):
        c = np.asarray(truth.center) + s * t
        params = SphereParams(tuple(c), truth.radius)
        template.with_obstacles([params.sphere(truth)]).check_geometry()
        vals[i] = misfit(params, observed, template, solver).value
    return ScanResult(shifts, vals, t)

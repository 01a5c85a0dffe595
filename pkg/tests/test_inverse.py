import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phaseless_em.core import Incident, MeasurementGrid, WaveContext, default_incidents
from phaseless_em.errors import BudgetExceeded, GeometryError
from phaseless_em.inverse import (
    PENALTY,
    CachedObjective,
    ObservedData,
    SphereParams,
    ambiguity_scan,
    misfit,
    nelder_mead,
    reconstruct_sphere,
    single_wave_incidents,
    superposition_incidents,
)
from phaseless_em.mie import SphereObstacle
from phaseless_em.scene import Ball, Scene, SolverSpec, phaseless_data

K1 = WaveContext(1.0)
B = SphereObstacle((6.0, 0, 0), 1.0)
BR = Ball((0, 0, 0), 2.0)
TRUTH = SphereObstacle((0.5, 0, 0.2), 0.6)
TP = SphereParams(TRUTH.center, TRUTH.radius)
MIE = SolverSpec(kind="mie")
GRID = MeasurementGrid()
INC = default_incidents(6, 0)


# -- Nelder-Mead ------------------------------------------------------------


def test_nelder_mead_quadratic_bowl():
    xs = np.array([0.3, -1.2, 2.0, 0.5])
    x0 = xs + np.array([1.0, 0, 0, 0])
    res = nelder_mead(lambda x: float(np.sum((x - xs) ** 2)), x0, step=0.5, xtol=1e-5,
                      max_evals=200)
    assert np.linalg.norm(res.x - xs) < 1e-5
    assert res.n_evals <= 200


def test_nelder_mead_rosenbrock():
    f = lambda x: float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)
    res = nelder_mead(f, np.array([-1.2, 1.0]), step=0.5, xtol=1e-8, ftol=1e-16, max_evals=2000)
    assert res.fun < 1e-6 and res.n_evals <= 2000


def test_nelder_mead_constant_stops_on_spread():
    res = nelder_mead(lambda x: 3.0, np.zeros(3))
    assert res.reason == "ftol" and res.n_iter == 0 and res.n_evals == 4


def test_nelder_mead_budget_flagged():
    f = lambda x: float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)
    with pytest.warns(BudgetExceeded):
        res = nelder_mead(f, np.array([-1.2, 1.0]), max_evals=30)
    assert res.flagged and res.reason == "budget" and res.n_evals <= 30
    assert res.fun == min(t[1] for t in res.trace)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=3, max_value=120))
def test_nelder_mead_never_exceeds_budget(budget):
    f = lambda x: float((1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BudgetExceeded)
        res = nelder_mead(f, np.array([-1.2, 1.0]), max_evals=budget)
    assert res.n_evals <= budget


def test_nelder_mead_trace_is_monotone_best():
    res = nelder_mead(lambda x: float(np.sum(x**2)), np.ones(2), max_evals=100)
    assert [t[0] for t in res.trace] == list(range(len(res.trace)))
    assert res.fun == min(t[1] for t in res.trace)


def test_nelder_mead_xtol_stop():
    res = nelder_mead(lambda x: float(np.sum(np.abs(x))), np.ones(2), xtol=1e-4, ftol=0.0)
    assert res.reason == "xtol"


# -- parameters and data ----------------------------------------------------


def test_sphere_params():
    with pytest.raises(GeometryError):
        SphereParams((0, 0, 0), 0.0)
    p = SphereParams.from_vector([1, 2, 3, 0.5])
    np.testing.assert_array_equal(p.as_vector(), [1, 2, 3, 0.5])
    assert p.errors(SphereParams((1, 2, 4), 0.25)) == (1.0, 0.25)


@pytest.fixture(scope="module")
def mie_observed():
    table = phaseless_data(Scene(K1, (TRUTH,)), MIE, GRID, INC)
    return ObservedData.from_table(GRID, INC, table)


def test_misfit_self_consistency_mie(mie_observed):
    m = misfit(TP, mie_observed, Scene(K1, (TRUTH,)), MIE)
    assert m.value < 1e-20 and m.n_records == 16 * 32 * 12 * 2


def test_misfit_radius_sensitivity(mie_observed):
    tmpl = Scene(K1, (TRUTH,))
    floor = max(misfit(TP, mie_observed, tmpl, MIE).value, 1e-30)
    off = misfit(SphereParams(TP.center, 1.1 * TP.radius), mie_observed, tmpl, MIE).value
    assert off > 1e3 * floor and off > 1.0


def test_misfit_geometry_error(mie_observed):
    tmpl = Scene(K1, (TRUTH,), B, BR)
    with pytest.raises(GeometryError):
        misfit(SphereParams((1.8, 0, 0), 0.6), mie_observed, tmpl, MIE)


def test_misfit_record_order_invariant(mie_observed, rng):
    recs = mie_observed.records()
    perm = [recs[i] for i in rng.permutation(len(recs))]
    a = ObservedData.from_records(recs)
    b = ObservedData.from_records(perm)
    tmpl = Scene(K1, (TRUTH,))
    p = SphereParams((0.45, 0.05, 0.2), 0.62)
    assert misfit(p, a, tmpl, MIE).value == misfit(p, b, tmpl, MIE).value
    np.testing.assert_array_equal(a.values, b.values)


def test_observed_roundtrip(mie_observed):
    again = ObservedData.from_records(mie_observed.records())
    tmpl = Scene(K1, (TRUTH,))
    p = SphereParams((0.4, 0, 0.2), 0.65)
    assert misfit(p, again, tmpl, MIE).value == pytest.approx(
        misfit(p, mie_observed, tmpl, MIE).value, rel=1e-12)


@pytest.fixture(scope="module")
def efie_data():
    scene = Scene(K1, (TRUTH,), B, BR)
    s2 = SolverSpec(subdivisions=2)
    d2 = phaseless_data(scene, s2, GRID, INC)
    d3 = phaseless_data(scene, SolverSpec(subdivisions=3), GRID, INC)
    return scene, s2, ObservedData.from_table(GRID, INC, d2), ObservedData.from_table(GRID, INC, d3)


def test_misfit_self_consistency_efie(efie_data):
    scene, s2, obs2, _ = efie_data
    assert misfit(TP, obs2, scene, s2).value < 1e-20


@pytest.mark.slow
def test_misfit_mesh_transfer_below_crime_free_threshold(efie_data):
    scene, s2, obs2, obs3 = efie_data
    transfer = misfit(TP, obs3, scene, s2).value
    # misfit that a 1e-2 radius error produces on the inversion mesh
    threshold = misfit(SphereParams(TP.center, TP.radius + 1e-2), obs2, scene, s2).value
    assert 0 < transfer < threshold
    assert transfer < 1e-2 * threshold


# -- objective and reconstruction -------------------------------------------


def test_cached_objective_penalty_and_cache(mie_observed):
    obj = CachedObjective(mie_observed, Scene(K1, (TRUTH,), None, BR), MIE)
    assert obj([0, 0, 0, -0.1]) == PENALTY
    assert obj([1.9, 0, 0, 0.5]) == PENALTY
    assert obj.n_solves == 0
    v = obj([0.5, 0, 0.2, 0.6])
    assert obj([0.5 + 2e-7, 0, 0.2, 0.6]) == v
    assert obj.n_solves == 1


def test_reconstruct_from_truth_is_immediate(mie_observed):
    res = reconstruct_sphere(mie_observed, Scene(K1, (TRUTH,), None, BR), TP, MIE, truth=TP)
    assert res.params == TP
    assert res.trace[0][1] == res.misfit and res.center_error == 0 and res.radius_error == 0
    assert res.misfit < 1e-20


def test_reconstruct_mie_superposition(mie_observed):
    init = SphereParams((0.6, -0.1, 0.3), 0.7)
    res = reconstruct_sphere(mie_observed, Scene(K1, (TRUTH,), None, BR), init, MIE, truth=TP,
                             max_evals=400)
    assert res.center_error < 1e-3 and res.radius_error < 1e-3
    assert res.n_solves <= res.n_evals <= 400


def test_reconstruct_single_wave_keeps_translation_error():
    inc = single_wave_incidents(default_incidents(2, 0))
    table = phaseless_data(Scene(K1, (TRUTH,)), MIE, GRID, inc)
    obs = ObservedData.from_table(GRID, inc, table)
    init = SphereParams((0.7, 0, 0.2), 0.6)
    res = reconstruct_sphere(obs, Scene(K1, (TRUTH,), None, BR), init, MIE, truth=TP)
    assert res.radius_error < 1e-4
    assert abs(res.params.center[0] - TP.center[0]) > 0.1


def test_incident_filters():
    inc = default_incidents(2, 0)
    single = single_wave_incidents(inc)
    assert all(i.is_single_wave for i in single)
    assert superposition_incidents(inc + single) == inc


# -- ambiguity scans --------------------------------------------------------

SHIFTS = [-0.2, -0.1, 0.0, 0.1, 0.2]


def test_scan_single_wave_is_flat():
    inc = single_wave_incidents(INC)
    r = ambiguity_scan(TRUTH, Scene(K1, (TRUTH,), None, BR), inc, GRID, (1, 0, 0), SHIFTS)
    assert np.abs(r.values).max() < 1e-12
    assert abs(r.curvature()) < 1e-10


@pytest.mark.parametrize("axis", [0, 1, 2])
def test_scan_superposition_has_strict_minimum(axis):
    t = np.eye(3)[axis]
    r = ambiguity_scan(TRUTH, Scene(K1, (TRUTH,), None, BR), INC, GRID, t, SHIFTS)
    assert r.values[2] < 1e-20
    assert np.all(r.values[[0, 1, 3, 4]] > 0)
    assert r.curvature() > 0


def test_scan_reference_ball_adds_separation():
    shifts = [-0.2, 0.0, 0.2]
    noB = ambiguity_scan(TRUTH, Scene(K1, (TRUTH,), None, BR), INC, GRID, (1, 0, 0), shifts)
    withB = ambiguity_scan(TRUTH, Scene(K1, (TRUTH,), B, BR), INC, GRID, (1, 0, 0), shifts)
    assert withB.values[1] < 1e-20 and withB.values[0] > 0 and withB.values[2] > 0
    assert withB.values[2] > noB.values[2]


def test_scan_geometry_error():
    with pytest.raises(GeometryError):
        ambiguity_scan(TRUTH, Scene(K1, (TRUTH,), None, BR), INC[:1], GRID, (1, 0, 0), [0.0, 1.0])


def test_scan_curvature_needs_bracket():
    r = ambiguity_scan(TRUTH, Scene(K1, (TRUTH,)), INC[:1], MeasurementGrid(4, 8), (1, 0, 0),
                       [0.0, 0.1, 0.2])
    with pytest.raises(ValueError):
        r.curvature()

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phaseless_em import mie
from phaseless_em.core import WaveContext, incident_electric, incident_magnetic
from phaseless_em.errors import ResonanceError
from phaseless_em.mie import (
    PEC,
    Dielectric,
    Impedance,
    SphereObstacle,
    cross_sections,
    far_field_matrix,
    magnetic_far_field_matrix,
    mie_coefficients,
    near_scattered_field,
    translated_far_field,
    wiscombe_order,
)
from phaseless_em.verify import check_reciprocity, symmetric_directions

from conftest import curl_fd, random_unit

ORIGIN = (0.0, 0.0, 0.0)


def coeffs_for(bc, ka=1.0, n_max=None):
    return mie_coefficients(SphereObstacle(ORIGIN, 1.0, bc), WaveContext(ka), n_max)


@pytest.mark.parametrize("ka", [0.1, 0.01])
def test_rayleigh_limit(ka):
    c = coeffs_for(PEC(), ka)
    a1, b1 = c.a[0], c.b[0]
    assert abs(b1) > abs(a1)
    # small-argument series: a_1 ~ -i x^3 / 3, b_1 ~ 2i x^3 / 3
    assert abs(a1 / (-1j * ka**3 / 3) - 1) < 2 * ka**2
    assert abs(b1 / (2j * ka**3 / 3) - 1) < 2 * ka**2
    assert abs(b1 / a1 + 2) < 2 * ka**2
    # higher orders are smaller by further powers of ka
    assert abs(c.a[1]) < abs(a1) * ka and abs(c.b[1]) < abs(b1) * ka


def test_dielectric_index_one_is_transparent():
    c = coeffs_for(Dielectric(1.0), 1.3)
    assert np.abs(c.a).max() == 0 and np.abs(c.b).max() == 0


def test_impedance_continuity_at_zero():
    c0 = coeffs_for(Impedance(0.0))
    c1 = coeffs_for(Impedance(1e-12))
    assert np.abs(c0.a - c1.a).max() < 1e-10
    assert np.abs(c0.b - c1.b).max() < 1e-10


def test_impedance_limits():
    pec = coeffs_for(PEC())
    zero = coeffs_for(Impedance(0.0))
    # lambda = 0 exchanges the roles of the two mode families
    np.testing.assert_allclose(zero.a, pec.b, atol=1e-15)
    np.testing.assert_allclose(zero.b, pec.a, atol=1e-15)
    big = coeffs_for(Impedance(1e9))
    np.testing.assert_allclose(big.a, pec.a, atol=1e-8)
    np.testing.assert_allclose(big.b, pec.b, atol=1e-8)


@pytest.mark.parametrize(
    "bc", [PEC(), Impedance(0.0), Dielectric(1.5), Dielectric(3.2)], ids=repr
)
@pytest.mark.parametrize("ka", [0.3, 1.0, 4.0])
def test_unitarity_lossless(bc, ka):
    c = coeffs_for(bc, ka)
    assert np.abs(np.abs(1 + 2 * c.a) - 1).max() < 1e-10
    assert np.abs(np.abs(1 + 2 * c.b) - 1).max() < 1e-10


@given(st.floats(1e-3, 50.0), st.floats(0.2, 5.0))
@settings(max_examples=40, deadline=None)
def test_impedance_is_passive(lam, ka):
    c = coeffs_for(Impedance(lam), ka)
    assert np.all(np.abs(1 + 2 * c.a) <= 1 + 1e-12)
    assert np.all(np.abs(1 + 2 * c.b) <= 1 + 1e-12)


def test_absorbing_dielectric_is_passive():
    c = coeffs_for(Dielectric(1.5 + 0.3j), 2.0)
    for x in (c.a, c.b):
        s = np.abs(1 + 2 * x)
        assert np.all(s <= 1 + 1e-12) and s[0] < 0.9
    ext, sca = cross_sections(c)
    assert ext > sca > 0


@pytest.mark.parametrize("ka", [0.5, 1.0, 3.0])
def test_optical_theorem_pec(ka):
    ext, sca = cross_sections(coeffs_for(PEC(), ka))
    assert abs(ext - sca) / sca < 1e-10


def test_scattering_cross_section_from_far_field():
    ctx = WaveContext(1.0)
    c = coeffs_for(PEC())
    x, w = np.polynomial.legendre.leggauss(40)
    phi = 2 * np.pi * np.arange(80) / 80
    T, P = np.meshgrid(np.arccos(x), phi, indexing="ij")
    X = np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], -1).reshape(-1, 3)
    W = np.outer(w, np.full(80, 2 * np.pi / 80)).ravel()
    d, p = np.array([0, 0, 1.0]), np.array([1, 0, 0.0])
    E = far_field_matrix(c, X, d) @ p
    # |E^i| = k, far field normalized like the incident amplitude
    sca_ff = W @ np.sum(np.abs(E) ** 2, axis=1) / ctx.k**2 / ctx.k**2
    assert sca_ff == pytest.approx(cross_sections(c)[1], rel=1e-10)


def test_truncation_doubling():
    X = symmetric_directions(10, 5)
    for bc in (PEC(), Impedance(0.7), Dielectric(1.4 + 0.1j)):
        N = wiscombe_order(1.0)
        M1 = far_field_matrix(coeffs_for(bc, 1.0, N), X[:, None], X[None])
        M2 = far_field_matrix(coeffs_for(bc, 1.0, 2 * N), X[:, None], X[None])
        assert np.abs(M1 - M2).max() < 1e-10


def test_wiscombe_order():
    assert wiscombe_order(1.0) == 14
    assert wiscombe_order(10.0) == 27


def test_resonance_error(monkeypatch):
    monkeypatch.setattr(mie, "DENOMINATOR_TOL", 1e6)
    with pytest.raises(ResonanceError):
        coeffs_for(PEC())


def test_backscatter_symmetry(rng):
    c = coeffs_for(PEC())
    d = random_unit(rng)
    M = far_field_matrix(c, -d, d)
    u = np.cross(d, [0.3, 0.1, 0.9])
    u /= np.linalg.norm(u)
    v = np.cross(d, u)
    vals = [np.linalg.norm(M @ (np.cos(a) * u + np.sin(a) * v)) for a in np.linspace(0, 3, 7)]
    assert np.ptp(vals) < 1e-14 * max(vals)
    # E^inf(-d, d) is a multiple of the projector orthogonal to d
    P = np.eye(3) - np.outer(d, d)
    s = np.trace(M) / 2
    assert np.abs(M - s * P).max() < 1e-14


@pytest.mark.parametrize("bc", [PEC(), Impedance(0.5), Dielectric(2.0 + 0.2j)], ids=repr)
def test_far_field_identities(bc):
    c = coeffs_for(bc)
    X = symmetric_directions(10, 7)
    Xa, Xb = X[:, None, :], X[None, :, :]
    M = far_field_matrix(c, Xa, Xb)
    H = magnetic_far_field_matrix(c, Xa, Xb)
    scale = np.abs(M).max()
    assert np.abs(np.einsum("...ij,...j->...i", M, np.broadcast_to(Xb, M.shape[:-1]))).max() < 1e-14 * scale
    assert np.abs(np.einsum("...i,...ij->...j", np.broadcast_to(Xa, M.shape[:-1]), M)).max() < 1e-14 * scale
    cross = np.cross(np.broadcast_to(Xa, M.shape[:-1])[..., :, None], M, axis=-2)
    assert np.abs(H - cross).max() < 1e-12 * scale
    assert check_reciprocity(M, X).residual < 1e-10


def test_far_field_forward_backward_regular():
    c = coeffs_for(PEC())
    d = np.array([0.0, 0.0, 1.0])
    for x in (d, -d):
        M = far_field_matrix(c, x, d)
        assert np.all(np.isfinite(M))
        near = far_field_matrix(c, np.array([1e-7, 0, x[2]]) / np.hypot(1e-7, 1), d)
        assert np.abs(M - near).max() < 1e-6


def test_translated_far_field_examples(rng):
    ctx = WaveContext(1.3)
    c = coeffs_for(PEC())
    X = random_unit(rng, 20)
    d = random_unit(rng)
    M = far_field_matrix(c, X, d)
    np.testing.assert_array_equal(translated_far_field(M, np.zeros(3), X, d, ctx), M)
    Mz = translated_far_field(M, rng.normal(size=3) * 4, X, d, ctx)
    p = rng.normal(size=3)
    np.testing.assert_allclose(np.abs(Mz @ p), np.abs(M @ p), rtol=1e-13)


def _surface_points(rng, n, center, radius):
    nu = random_unit(rng, n)
    return np.asarray(center) + radius * nu, nu


def test_pec_boundary_condition(rng):
    ctx = WaveContext(1.0)
    s = SphereObstacle((0.3, -0.2, 0.5), 1.0)
    c = mie_coefficients(s, ctx)
    x, nu = _surface_points(rng, 64, s.center, s.radius)
    d, p = random_unit(rng), np.array([0.2, 1.0, -0.4])
    Es, _ = near_scattered_field(s, c, x, d, p, ctx)
    Ei = incident_electric(x, d, p, ctx)
    res = np.abs(np.cross(nu, Ei + Es)).max() / np.abs(Ei).max()
    assert res < 1e-8


def test_impedance_boundary_condition(rng):
    ctx = WaveContext(1.2)
    lam = 0.8
    s = SphereObstacle(ORIGIN, 0.9, Impedance(lam))
    c = mie_coefficients(s, ctx)
    x, nu = _surface_points(rng, 64, s.center, s.radius)
    d, p = random_unit(rng), random_unit(rng)
    Es, Hs = near_scattered_field(s, c, x, d, p, ctx)
    E = Es + incident_electric(x, d, p, ctx)
    H = Hs + incident_magnetic(x, d, p, ctx)
    # nu x curl E - i lam (nu x E) x nu with curl E = ik H
    res = np.cross(nu, 1j * ctx.k * H) - 1j * lam * np.cross(np.cross(nu, E), nu)
    assert np.abs(res).max() / np.abs(H).max() < 1e-8


def test_near_field_asymptotics(rng):
    ctx = WaveContext(1.0)
    s = SphereObstacle(ORIGIN, 1.0)
    c = mie_coefficients(s, ctx)
    d, p = random_unit(rng), random_unit(rng)
    X = random_unit(rng, 5)
    r = 1e3
    Es, _ = near_scattered_field(s, c, r * X, d, p, ctx)
    Einf = far_field_matrix(c, X, d) @ p
    approx = r * np.exp(-1j * ctx.k * r) * Es
    assert np.abs(approx - Einf).max() / np.abs(Einf).max() < 1e-2


@pytest.mark.parametrize("bc", [PEC(), Impedance(0.4), Dielectric(1.6)], ids=repr)
def test_near_field_is_maxwell(rng, bc):
    ctx = WaveContext(1.0)
    s = SphereObstacle((0.1, 0.0, -0.2), 1.0, bc)
    c = mie_coefficients(s, ctx)
    d, p = random_unit(rng), random_unit(rng)
    x = np.array([1.1, 0.9, 1.3])
    curl = curl_fd(lambda y: near_scattered_field(s, c, y, d, p, ctx)[0], x, h=1e-5)
    _, H = near_scattered_field(s, c, x, d, p, ctx)
    assert np.abs(curl - 1j * ctx.k * H).max() / np.abs(H).max() < 1e-6


def test_near_field_rejects_interior_points():
    s = SphereObstacle(ORIGIN, 1.0)
    c = mie_coefficients(s, WaveContext(1.0))
    with pytest.raises(ValueError):
        near_scattered_field(s, c, np.array([0.5, 0, 0]), [0, 0, 1.0], [1, 0, 0.0],
                             WaveContext(1.0))


def test_obstacle_validation():
    with pytest.raises(ValueError):
        SphereObstacle(ORIGIN, 0.0)
    with pytest.raises(ValueError):
        Impedance(-1.0)
    with pytest.raises(ValueError):
        Dielectric(1.0 - 0.1j)

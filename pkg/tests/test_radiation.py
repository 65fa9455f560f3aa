import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from urbancool import radiation as rad
from urbancool.geometry import box_mesh
from urbancool.raytrace import BVH

SIGMA = rad.SIGMA


def far_away():
    """A scene with one tiny triangle well below the ground: effectively empty."""
    return BVH(np.array([[[0, 0, -500.0], [1, 0, -500.0], [0, 1, -500.0]]]))


def canyon_bvh(h, w, length=2000.0):
    a = box_mesh(-length / 2, -w / 2 - 5, 0, length / 2, -w / 2, h)
    b = box_mesh(-length / 2, w / 2, 0, length / 2, w / 2 + 5, h)
    return BVH(np.concatenate([a.corners, b.corners]))


# -- sky view factor and shadows ------------------------------------------------

def test_svf_open_ground_is_one():
    assert rad.compute_svf(far_away(), (0, 0, 0), n_samples=256) == 1.0


def test_svf_vertical_wall_half():
    v = rad.compute_svf(far_away(), (0, 0, 5), normal=(1, 0, 0), n_samples=4096, seed=3)
    assert v == pytest.approx(0.5, abs=0.03)


@pytest.mark.parametrize("aspect", [0.5, 1.5])
def test_svf_canyon_floor_matches_analytic(aspect):
    w = 20.0
    bvh = canyon_bvh(aspect * w, w)
    analytic = 1.0 / math.sqrt(1.0 + 4.0 * aspect ** 2)
    v = rad.compute_svf(bvh, (0, 0, 0), n_samples=8192, seed=1)
    assert v == pytest.approx(analytic, abs=0.02)


def test_svf_deep_canyon_small():
    bvh = canyon_bvh(100.0, 10.0)
    assert rad.compute_svf(bvh, (0, 0, 0), n_samples=2048) < 0.2


def test_svf_needs_enough_samples():
    with pytest.raises(ValueError):
        rad.compute_svf(far_away(), (0, 0, 0), n_samples=8)


def test_svf_seeded_repeatable():
    bvh = canyon_bvh(30.0, 20.0)
    assert rad.compute_svf(bvh, (0, 0, 0), seed=7) == rad.compute_svf(bvh, (0, 0, 0), seed=7)


def test_svf_error_shrinks_with_samples():
    bvh = far_away()
    stds = []
    for n in (128, 256):
        est = [rad.compute_svf(bvh, (0, 0, 1), normal=(1, 0, 0), n_samples=n, seed=s) for s in range(400)]
        stds.append(np.std(est))
    assert stds[1] / stds[0] == pytest.approx(1 / math.sqrt(2), rel=0.2)


def test_shadow_empty_scene_lit():
    assert rad.shadow_test(far_away(), (0, 0, 0), (0, 0, 1))


def test_shadow_behind_wall():
    # wall along x at y in [0, 1], 10 m tall; sun due south (-y) at 45 degrees
    bvh = BVH(box_mesh(-50, 0, 0, 50, 1, 10).corners)
    sun = (0.0, -math.cos(math.pi / 4), math.sin(math.pi / 4))
    assert not rad.shadow_test(bvh, (0, 5, 0.01), sun)      # shadow reaches 10 m past the wall
    assert rad.shadow_test(bvh, (0, 13, 0.01), sun)


def test_shadow_sun_below_horizon():
    assert not rad.shadow_test(far_away(), (0, 0, 0), (0, 1, -0.1))


# -- surface fluxes ----------------------------------------------------------------

def test_shortwave_night_zero():
    assert rad.shortwave_in(True, 0.0, 0.0, 1.0, 0.6, 0.2, 0.0) == 0.0


def test_shortwave_roof_at_zenith():
    assert rad.shortwave_in(True, 800.0, 100.0, 1.0, 1.0, 0.2, 900.0) == pytest.approx(900.0)


def test_shortwave_shaded_wall():
    assert rad.shortwave_in(False, 600.0, 400.0, 0.5, 0.5, 0.15, 500.0) == pytest.approx(237.5)


def test_longwave_equilibrium_enclosure():
    q_in, q_out = rad.longwave_exchange(1.0, 300.0, 300.0, 280.0, 0.0)
    assert q_in == pytest.approx(q_out)
    assert q_in == pytest.approx(SIGMA * 300.0 ** 4)


def test_longwave_examples():
    q_in, _ = rad.longwave_exchange(0.9, 300.0, 300.0, 300.0, 1.0, sky_emissivity=0.8)
    assert q_in == pytest.approx(0.8 * SIGMA * 300.0 ** 4)
    assert q_in == pytest.approx(367.4, abs=0.05)
    _, q_out = rad.longwave_exchange(0.9, 310.0, 300.0, 300.0, 1.0)
    assert q_out == pytest.approx(0.9 * SIGMA * 310.0 ** 4, rel=1e-12)
    assert q_out == pytest.approx(471.4, abs=0.15)


@pytest.mark.parametrize("u,kw,expected", [(0.0, {}, 5.7), (2.0, {}, 13.3), (4.0, {"a": 0, "b": 1}, 4.0)])
def test_convective_coefficient(u, kw, expected):
    assert rad.convective_coefficient(u, **kw) == pytest.approx(expected)


# -- surface energy balance ----------------------------------------------------------

def integrate(t0, q_abs, eps, h, t_air, c, dt, steps):
    t = t0
    for _ in range(steps):
        t = rad.step_surface_temperature(t, q_abs, eps, h, t_air, c, dt)
    return t


def test_relaxes_to_air_without_radiation():
    # absorbed longwave balances emission at T_air, so net radiation is zero there
    t_air = 300.0
    q_abs = 0.9 * SIGMA * t_air ** 4
    ts = [320.0]
    for _ in range(200):
        ts.append(float(rad.step_surface_temperature(ts[-1], q_abs, 0.9, 10.0, t_air, 5e4, 600.0)))
    assert all(a > b for a, b in zip(ts, ts[1:]) if a - t_air > 1e-9)
    assert ts[-1] == pytest.approx(t_air, abs=1e-6)


@pytest.mark.parametrize("q_abs,h,t_air", [(600.0, 8.0, 300.0), (350.0, 15.0, 295.0), (900.0, 5.7, 305.0)])
def test_steady_state_matches_bisection(q_abs, h, t_air):
    eps = 0.9
    oracle = brentq(lambda t: q_abs - eps * SIGMA * t ** 4 - h * (t - t_air), 200.0, 400.0, xtol=1e-10)
    t = integrate(300.0, q_abs, eps, h, t_air, 5e4, 600.0, 2000)
    assert t == pytest.approx(oracle, abs=0.05)
    residual = q_abs - eps * SIGMA * t ** 4 - h * (t - t_air)
    assert abs(residual) <= 0.5


def test_small_step_matches_explicit_rate():
    t0, q_abs, eps, h, t_air, c = 310.0, 700.0, 0.9, 10.0, 300.0, 5e4
    dt = 1.0
    net = q_abs - eps * SIGMA * t0 ** 4 - h * (t0 - t_air)
    dtemp = float(rad.step_surface_temperature(t0, q_abs, eps, h, t_air, c, dt)) - t0
    assert dtemp == pytest.approx(net / c * dt, rel=0.01)


def test_divergence_guard_reports_face():
    with pytest.raises(rad.SurfaceDivergence, match="face 1"):
        rad.step_surface_temperature(np.array([300.0, 300.0]), np.array([0.0, 1e9]), 0.9, 10.0, 300.0, 5e4, 600.0)


def test_step_rejects_bad_dt():
    with pytest.raises(ValueError):
        rad.step_surface_temperature(300.0, 0.0, 0.9, 10.0, 300.0, 5e4, 0.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 0.9), st.floats(0.01, 0.1), st.floats(0.0, 1000.0), st.floats(2.0, 30.0))
def test_albedo_never_raises_equilibrium(a1, da, q_sw, h):
    a2 = a1 + da
    q_lw = 400.0

    def eq(alpha):
        return integrate(300.0, (1 - alpha) * q_sw + 0.9 * q_lw, 0.9, h, 300.0, 5e4, 3600.0, 400)

    assert eq(a2) <= eq(a1) + 1e-9


# -- mean radiant temperature ------------------------------------------------------

def test_mrt_isothermal_enclosure():
    t = 303.15
    m = rad.mean_radiant_temperature(0.0, 0.0, False, 0.0, 0.0, t, SIGMA * t ** 4)
    assert m == pytest.approx(30.0, abs=1e-9)


def test_mrt_blackbody_sky():
    t = 303.15
    m = rad.mean_radiant_temperature(0.0, 0.0, False, 1.0, 0.0, t, 0.0, sky_emissivity=1.0)
    assert m == pytest.approx(30.0, abs=1e-9)


def test_mrt_direct_sun_by_hand():
    t = 303.15
    m = rad.mean_radiant_temperature(800.0, 0.0, True, 0.0, 0.0, t, SIGMA * t ** 4)
    s = 0.7 * 0.7 * 800.0 + 0.97 * SIGMA * t ** 4
    assert m == pytest.approx((s / (0.97 * SIGMA)) ** 0.25 - 273.15, abs=1e-9)
    assert m > 30.0


def test_mrt_at_point_uses_mean_field():
    t = 303.15
    a = rad.mrt_at_point(500.0, 100.0, True, 0.4, 0.2, 600.0, t, 310.0)
    refl = 0.2 * 600.0 * 0.6
    b = rad.mean_radiant_temperature(500.0, 100.0, True, 0.4, refl, t, 0.6 * SIGMA * 310.0 ** 4)
    assert a == pytest.approx(b)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 300.0), st.floats(0.0, 200.0), st.booleans())
def test_mrt_non_decreasing_in_reflected(refl, extra, lit):
    t = 303.15
    lo = rad.mean_radiant_temperature(600.0, 150.0, lit, 0.3, refl, t, 0.7 * SIGMA * 310.0 ** 4)
    hi = rad.mean_radiant_temperature(600.0, 150.0, lit, 0.3, refl + extra, t, 0.7 * SIGMA * 310.0 ** 4)
    assert hi >= lo


# -- scene construction -------------------------------------------------------------

def test_subdivide_preserves_area_and_bounds_edges():
    tri = box_mesh(0, 0, 0, 30, 10, 12).corners
    sub, parent = rad.subdivide(tri, 4.0)
    area = lambda c: 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)
    assert area(sub).sum() == pytest.approx(area(tri).sum())
    edges = np.linalg.norm(sub - np.roll(sub, 1, axis=1), axis=2)
    assert edges.max() <= 4.0 + 1e-9
    np.testing.assert_allclose(np.bincount(parent, weights=area(sub)), area(tri))


def test_canyon_surfaces(canyon_context):
    ctx, _ = canyon_context
    s = ctx.surfaces
    nb = s.n_building_faces
    for bid in s.building_ids:
        k = s.building_ids.index(bid)
        mine = s.building[:nb] == k
        assert s.areas[:nb][mine & (s.cls[:nb] == rad.ROOF)].sum() == pytest.approx(160 * 20)
        assert s.areas[:nb][mine & (s.cls[:nb] == rad.WALL)].sum() == pytest.approx(2 * 160 * 30 + 2 * 20 * 30)
    g = ctx.grid
    assert s.areas[nb:].sum() == pytest.approx(g.nx * g.ny * g.cell_size ** 2)
    # ground under the footprints is covered, street is open
    assert s.covered[s.ground_face(100.0, 80.0)]
    assert not s.covered[s.ground_face(100.0, 100.0)]


def test_pedestrian_sphere_weights(canyon_context):
    ped = canyon_context[0].pedestrian
    totals = np.asarray(ped.view.sum(axis=1)).ravel() + ped.svf
    np.testing.assert_allclose(totals, 1.0, atol=1e-12)
    np.testing.assert_allclose(ped.svf, 0.5 * ped.svf_upper)


def test_face_views_close(canyon_context):
    scene = canyon_context[0].scene
    act = scene.surfaces.active
    totals = np.asarray(scene.view.sum(axis=1)).ravel() + scene.svf
    # rays that leave below the horizon without hitting anything count as neither sky nor surface
    assert np.all(totals[act] <= 1.0 + 1e-12)
    roofs = act & (scene.surfaces.cls == rad.ROOF)
    assert np.all(scene.svf[roofs] == 1.0)


def test_night_hours_no_shortwave(canyon_baseline):
    res = canyon_baseline
    for i, (_, elev) in enumerate(res.sun):
        if elev <= 0:
            assert np.all(res.q_sw_in[i] == 0.0)
            assert not res.lit[i].any()


def test_brighter_ground_raises_reflected_term(canyon_context, canyon_baseline):
    from urbancool.params import apply_delta, make_delta
    from urbancool.simulation import simulate

    ctx, params = canyon_context
    bright = apply_delta(params, make_delta(params, {"material.ground.albedo": 0.4}))
    res = simulate(ctx, bright)
    valid = ctx.pedestrian.valid
    assert np.all(res.reflected[:, valid] >= canyon_baseline.reflected[:, valid] - 1e-9)
    assert res.reflected[:, valid].sum() > canyon_baseline.reflected[:, valid].sum()

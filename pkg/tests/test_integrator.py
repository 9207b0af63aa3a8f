import math

import numpy as np
import pytest

from adaptsph.adaptivity import AdaptivityParams
from adaptsph.integrator import (KERNELS, SimConfig, Simulation, StepError, energy_proxy,
                                 midpoint_step, momentum, run)
from adaptsph.sph import Kind, MaterialModel, Particles, ViscosityParams

MAT = MaterialModel(rho0=1000.0, E=1e6, nu=0.3)


def block(n=8, dp=1e-3, ratio=1.0, seed=0, jitter=0.0):
    g = np.arange(n) * dp
    x = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    x = x + np.random.default_rng(seed).uniform(-jitter, jitter, x.shape) * dp
    return Particles.create(x, rho=ratio * MAT.rho0, m=MAT.rho0 * dp * dp)


def config(**kw):
    base = dict(dp=1e-3, dt=1e-6, t_end=2e-5, kernel="cubic-bspline", output_every=5)
    base.update(kw)
    return SimConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        config(kernel="gaussian")
    with pytest.raises(ValueError):
        config(dt=0.0)
    with pytest.raises(ValueError):
        config(eps_xsph=1.5)
    with pytest.raises(ValueError):
        config(output_every=0)
    c = config(t_end=3e-6, dt=1e-6)
    assert c.n_steps == 3  # 3e-6 / 1e-6 rounds just below 3
    assert config(t_end=2.5e-6, dt=1e-6).n_steps == 3  # the run reaches t_end
    assert config(t_end=1e-3, dt=5e-8).n_steps == 20000
    assert config(t_end=0.0).n_steps == 0
    assert c.h == pytest.approx(1.5e-3)
    assert set(KERNELS) >= {"standard-cubic", "adaptive-cubic"}


def test_midpoint_exact_for_constant_acceleration():
    g = -9.81

    def rhs(t, y):
        return np.array([y[1], g])

    y = np.array([1.0, 2.0])
    dt = 0.1
    for _ in range(10):
        y = midpoint_step(rhs, y, 0.0, dt)
    t = 1.0
    assert y[0] == pytest.approx(1.0 + 2.0 * t + 0.5 * g * t * t, rel=1e-13)
    assert y[1] == pytest.approx(2.0 + g * t, rel=1e-13)


def test_midpoint_second_order():
    def rhs(t, y):
        return np.array([y[1], -y[0]])

    errors = []
    for n in (50, 100, 200):
        y = np.array([1.0, 0.0])
        for k in range(n):
            y = midpoint_step(rhs, y, k / n, 1.0 / n)
        errors.append(abs(y[0] - math.cos(1.0)))
    rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    np.testing.assert_allclose(rates, 2.0, atol=0.05)


def test_simulation_exact_under_body_force():
    # widely spaced particles do not interact: free fall must be exact
    x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    p = Particles.create(x, rho=MAT.rho0, m=1e-3, v=np.array([[1.0, 0.0]] * 3))
    p.kind[2] = Kind.FIXED
    g = np.array([0.0, -9.81])
    sim = Simulation(p, MAT, config(dt=1e-3, t_end=0.05), accel=lambda t, q: np.broadcast_to(g, q.x.shape))
    res = run(sim)
    t = res.times[-1]
    assert t == pytest.approx(0.05)
    want = x[:2] + np.array([1.0, 0.0]) * t + 0.5 * g * t * t
    np.testing.assert_allclose(res.final.x[:2], want, rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(res.final.x[2], x[2])


def test_rest_state_stays_at_rest():
    sim = Simulation(block(jitter=0.1), MAT, config())
    res = run(sim)
    np.testing.assert_array_equal(res.final.x, sim.particles.x)
    assert np.all(res.final.v == 0.0)
    assert res.steps == 20 and not res.failed


def test_run_records_series_and_snapshots():
    p = block(ratio=1.01)
    seen = []
    sim = Simulation(p, MAT, config())
    res = run(sim, probes={"x0": lambda q: q.x[0, 0]}, on_snapshot=lambda t, s, q: seen.append(s))
    assert seen == [0, 5, 10, 15, 20]
    assert set(res.series) == {"x0", "energy", "momentum_x", "momentum_y"}
    assert len(res.times) == 21
    np.testing.assert_allclose(res.series["momentum_x"], 0.0, atol=1e-12)


def test_stop_when_ends_early():
    sim = Simulation(block(), MAT, config())
    res = run(sim, stop_when=lambda s: s.step_count == 3)
    assert res.steps == 3 and not res.failed


def test_failure_keeps_partial_data():
    p = block(ratio=1.01)
    sim = Simulation(p, MAT, config(dt=1.0, t_end=50.0))  # absurd step, blows up
    res = run(sim)
    assert res.failed
    assert "step" in res.error
    assert len(res.times) == res.steps + 1


def test_step_error_on_bad_state():
    p = block()
    p.rho[3] = np.nan
    with pytest.raises(StepError, match="drho|dv|rho"):
        Simulation(p, MAT, config()).step()
    p = block()
    p.x[0, 0] = np.inf
    with pytest.raises(StepError, match="non-finite"):
        Simulation(p, MAT, config()).step()


def test_step_error_on_negative_density():
    p = block(ratio=1.0)
    p.v[:, 0] = -np.sign(p.x[:, 0] - p.x[:, 0].mean()) * 50.0  # violent implosion
    sim = Simulation(p, MAT, config(dt=2e-5, t_end=1.0, viscosity=ViscosityParams(0.0, 0.0)))
    with pytest.raises(StepError):
        for _ in range(2000):
            sim.step()


def stressed_run(kernel, **kw):
    p = block(n=10, ratio=1.02, jitter=0.05)
    p.v[p.n // 2] = [0.01, 0.0]
    sim = Simulation(p, MAT, config(kernel=kernel, viscosity=ViscosityParams(1.0, 1.0), **kw))
    return run(sim)


def test_adaptive_with_equal_knots_matches_fixed_knot_bitwise():
    # compressed block: every particle takes the compression knot
    a = stressed_run("adaptive-cubic", adaptivity=AdaptivityParams(compression_a=0.7))
    b = stressed_run("cubic-bspline", fixed_knot=0.7)
    assert np.all(a.final.a_knot == 0.7)
    for name in ("x", "v", "rho", "S", "e"):
        np.testing.assert_array_equal(getattr(a.final, name), getattr(b.final, name))


def test_deterministic_reruns_are_bit_identical():
    a = stressed_run("adaptive-cubic")
    b = stressed_run("adaptive-cubic")
    for name in ("x", "v", "rho", "S", "e", "a_knot"):
        np.testing.assert_array_equal(getattr(a.final, name), getattr(b.final, name))
    for k in a.series:
        np.testing.assert_array_equal(a.series[k], b.series[k])


def test_energy_and_momentum_exclude_fixed():
    p = block(n=2)
    p.v[:] = 1.0
    p.kind[0] = Kind.FIXED
    assert energy_proxy(p) == pytest.approx(3 * p.m[0])
    np.testing.assert_allclose(momentum(p), 3 * p.m[0])


def test_cfl_warning(caplog):
    with caplog.at_level("WARNING"):
        Simulation(block(), MAT, config(dt=1e-3))
    assert "exceeds" in caplog.text

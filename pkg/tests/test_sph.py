import numpy as np
import pytest

from adaptsph import _backend, neighbors
from adaptsph.kernel import KernelFamily, eval_grad
from adaptsph.sph import (Kind, KernelSetup, MaterialModel, NonFiniteRate, Particles,
                          ViscosityParams, artificial_viscosity, cauchy_stress, compute_rates,
                          pressure, renormalization_matrix)

MAT = MaterialModel(rho0=1000.0, E=1e7, nu=0.3)
VISC = ViscosityParams(1.0, 1.0)
BACKENDS = _backend.available()


def jittered_patch(n=9, dp=1.0, jitter=0.15, seed=0, dim=2):
    rng = np.random.default_rng(seed)
    if dim == 1:
        x = np.arange(n, dtype=float)[:, None] * dp
    else:
        g = np.arange(n) * dp
        x = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
    return x + rng.uniform(-jitter, jitter, x.shape) * dp


def random_state(x, seed=1, dp=1.0, knots=True):
    rng = np.random.default_rng(seed)
    n, dim = x.shape
    p = Particles.create(x, rho=MAT.rho0 * rng.uniform(0.97, 1.03, n), m=MAT.rho0 * dp ** dim,
                         v=rng.normal(0, 1.0, (n, dim)))
    S = rng.normal(0, 1e4, (n, dim, dim))
    p.S = 0.5 * (S + S.transpose(0, 2, 1))
    if dim == 2:
        tr = np.trace(p.S, axis1=1, axis2=2) / 3.0
        p.S -= tr[:, None, None] * np.eye(2)  # keep the in-plane part roughly deviatoric
    if knots:
        p.a_knot = rng.uniform(0.3, 1.6, n)
    return p


def rates_for(p, family=KernelFamily.CUBIC, h=1.3, backend=None, renormalize=True, eps=0.5,
              boundary_state="evolving"):
    kern = KernelSetup(family, h)
    table = neighbors.build(p.x, kern.radius)
    return compute_rates(p, table, MAT, VISC, kern, eps, renormalize, backend, boundary_state)


def test_material_constants():
    assert MAT.K == pytest.approx(1e7 / (3 * 0.4))
    assert MAT.G == pytest.approx(1e7 / 2.6)
    with pytest.raises(ValueError):
        MaterialModel(rho0=1.0, E=1.0, nu=0.5)


def test_pressure_and_stress():
    assert pressure(MAT.rho0, MAT) == 0.0
    assert pressure(1.01 * MAT.rho0, MAT) == pytest.approx(0.01 * MAT.K)
    sig = cauchy_stress(2.0, np.zeros((2, 2)))
    np.testing.assert_array_equal(sig, -2.0 * np.eye(2))


def test_viscosity_only_for_approaching_pairs():
    xi, xj = np.array([0.0, 0.0]), np.array([1.0, 0.0])
    away = artificial_viscosity(xi, xj, np.array([-1.0, 0]), np.zeros(2), 1000, 1000, MAT, VISC, 1.3)
    assert away == 0.0
    close = artificial_viscosity(xi, xj, np.array([1.0, 0]), np.zeros(2), 1000, 1000, MAT, VISC, 1.3)
    assert close > 0.0


@pytest.mark.parametrize("dim", [1, 2])
@pytest.mark.parametrize("family", list(KernelFamily))
@pytest.mark.parametrize("renormalize", [True, False])
@pytest.mark.parametrize("boundary_state", ["evolving", "frozen"])
def test_backends_agree(dim, family, renormalize, boundary_state):
    if len(BACKENDS) < 2:
        pytest.skip("compiled core not built")
    p = random_state(jittered_patch(n=30 if dim == 1 else 8, dim=dim), seed=dim)
    p.kind[:3] = Kind.FIXED
    kw = dict(renormalize=renormalize, boundary_state=boundary_state)
    ref = rates_for(p, family, backend="python", **kw)
    got = rates_for(p, family, backend="cython", **kw)
    for name in ("drho", "dv", "de", "dS", "dS_out", "dx"):
        a, b = getattr(got, name), getattr(ref, name)
        np.testing.assert_allclose(a, b, rtol=1e-11, atol=1e-11 * np.max(np.abs(b)), err_msg=name)
    assert got.renorm_fallbacks == ref.renorm_fallbacks


@pytest.mark.parametrize("backend", BACKENDS)
def test_rest_state_is_a_fixed_point(backend):
    x = jittered_patch(jitter=0.2)
    p = Particles.create(x, rho=MAT.rho0, m=MAT.rho0)
    r = rates_for(p, backend=backend)
    for name in ("drho", "dv", "de", "dS", "dS_out"):
        assert np.all(getattr(r, name) == 0.0), name
    assert np.all(r.dx == 0.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_frozen_fixed_particles_get_zero_rates(backend):
    p = random_state(jittered_patch())
    p.kind[::4] = Kind.FIXED
    r = rates_for(p, backend=backend, boundary_state="frozen")
    f = p.fixed
    for name in ("drho", "dv", "de", "dS", "dS_out", "dx"):
        assert np.all(getattr(r, name)[f] == 0.0), name
    assert np.any(r.dv[~f] != 0.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_evolving_fixed_particles_stay_put_but_deform(backend):
    p = random_state(jittered_patch())
    p.kind[::4] = Kind.FIXED
    r = rates_for(p, backend=backend)
    f = p.fixed
    assert np.all(r.dv[f] == 0.0) and np.all(r.dx[f] == 0.0)
    q = p.copy()
    q.kind[:] = Kind.INTERIOR
    ref = rates_for(q, backend=backend)
    for name in ("drho", "de", "dS", "dS_out"):
        np.testing.assert_array_equal(getattr(r, name), getattr(ref, name), err_msg=name)
    assert np.any(r.dS[f] != 0.0)


def test_unknown_boundary_state():
    with pytest.raises(ValueError):
        rates_for(random_state(jittered_patch(n=4)), boundary_state="melting")


@pytest.mark.parametrize("backend", BACKENDS)
def test_deviatoric_rate_is_traceless(backend):
    p = random_state(jittered_patch(), seed=4)
    r = rates_for(p, backend=backend)
    scale = np.max(np.abs(r.dS))
    assert np.max(np.abs(r.full_trace())) <= 1e-12 * scale


def linear_velocity_state(L, seed=3):
    x = jittered_patch(n=10, jitter=0.25, seed=seed)
    p = Particles.create(x, rho=MAT.rho0, m=MAT.rho0, v=x @ L.T)
    p.a_knot = np.random.default_rng(seed).uniform(0.4, 1.4, p.n)
    return p


@pytest.mark.parametrize("backend", BACKENDS)
def test_renormalised_strain_rate_is_exact_for_linear_velocity(backend):
    L = np.array([[0.3, -0.7], [0.2, -0.1]])
    p = linear_velocity_state(L)
    r = rates_for(p, backend=backend)
    G = MAT.G
    want = G * (L + L.T - (2.0 / 3.0) * np.trace(L) * np.eye(2))
    # every particle, boundary ones included
    np.testing.assert_allclose(r.dS, np.broadcast_to(want, r.dS.shape), rtol=1e-8, atol=1e-8 * G)
    np.testing.assert_allclose(r.drho, -MAT.rho0 * np.trace(L), rtol=1e-8)


@pytest.mark.parametrize("backend", BACKENDS)
def test_correction_matrix_restores_linear_gradients(backend):
    p = linear_velocity_state(np.zeros((2, 2)), seed=7)
    kern = KernelSetup(KernelFamily.CUBIC, 1.3)
    table = neighbors.build(p.x, kern.radius)
    B, bad = _backend.get(backend).renormalization(
        p.x, p.rho, p.m, p.a_knot, table.offsets, table.indices, kern.family.code, kern.b, kern.h, 1e8)
    assert not bad.any()
    grad_f = np.array([1.7, -0.4])
    f = p.x @ grad_f
    for i in (0, 5, 44, 99):
        ref, _ = renormalization_matrix(i, p, table, kern)
        np.testing.assert_allclose(B[i], ref, rtol=1e-10)
        est = np.zeros(2)
        for j in table.neighbors(i):
            a = 0.5 * (p.a_knot[i] + p.a_knot[j])
            g = eval_grad(kern.pair_spec(a, 2), p.x[i] - p.x[j])
            est += p.m[j] / p.rho[j] * (f[j] - f[i]) * (B[i] @ g)
        np.testing.assert_allclose(est, grad_f, rtol=1e-8)


@pytest.mark.parametrize("backend", BACKENDS)
def test_rigid_rotation_rotates_stress(backend):
    omega = 2.0
    L = np.array([[0.0, -omega], [omega, 0.0]])
    p = linear_velocity_state(L, seed=11)
    S0 = np.array([[3e4, 1e4], [1e4, -1e4]])
    p.S[:] = S0
    r = rates_for(p, backend=backend)
    want = L @ S0 - S0 @ L  # co-rotational rate of a rigidly spinning stress
    np.testing.assert_allclose(r.dS, np.broadcast_to(want, r.dS.shape), rtol=1e-8, atol=1e-8 * 3e4)


@pytest.mark.parametrize("backend", BACKENDS)
def test_momentum_is_conserved_pairwise(backend):
    p = random_state(jittered_patch(), seed=9, knots=True)
    r = rates_for(p, backend=backend, renormalize=False)
    total = np.sum(p.m[:, None] * r.dv, axis=0)
    scale = np.sum(np.abs(p.m[:, None] * r.dv))
    assert np.all(np.abs(total) <= 1e-12 * scale)


def test_renormalisation_falls_back_on_isolated_particle():
    x = np.array([[0.0, 0.0], [100.0, 0.0], [101.0, 0.0]])
    p = Particles.create(x, rho=MAT.rho0, m=MAT.rho0)
    r = rates_for(p)
    assert r.renorm_fallbacks == 3  # no neighbours, and a collinear pair


def test_non_finite_state_raises():
    p = random_state(jittered_patch(n=4))
    p.rho[0] = np.nan
    with pytest.raises(NonFiniteRate):
        rates_for(p)


def test_table_size_mismatch():
    p = random_state(jittered_patch(n=4))
    table = neighbors.build(p.x[:-1], 2.6)
    with pytest.raises(ValueError):
        compute_rates(p, table, MAT, VISC, KernelSetup(KernelFamily.CUBIC, 1.3))


def test_standard_kernel_forces_b2():
    assert KernelSetup(KernelFamily.STANDARD_CUBIC, 1.0, b=3.0).radius == 2.0


def test_pressure_examples():
    mat = MaterialModel(rho0=1000.0, E=3e9 * (1 - 2 * 0.25), nu=0.25)  # K = 1 GPa
    assert mat.K == pytest.approx(1e9)
    assert pressure(1.05 * mat.rho0, mat) == pytest.approx(50e6)
    assert pressure(0.96 * mat.rho0, mat) == pytest.approx(-40e6)


def test_cauchy_trace_identity():
    S = np.array([[3.0, 1.0], [1.0, -3.0]])
    assert np.trace(cauchy_stress(2.5, S)) == pytest.approx(-2 * 2.5)
    np.testing.assert_array_equal(cauchy_stress(0.0, np.zeros((2, 2))), np.zeros((2, 2)))


def test_viscosity_symmetric_and_zero_without_relative_motion():
    rng = np.random.default_rng(2)
    for _ in range(20):
        xi, xj, vi, vj = rng.normal(size=(4, 2))
        ri, rj = rng.uniform(900, 1100, 2)
        pij = artificial_viscosity(xi, xj, vi, vj, ri, rj, MAT, VISC, 1.3)
        pji = artificial_viscosity(xj, xi, vj, vi, rj, ri, MAT, VISC, 1.3)
        assert pij == pytest.approx(pji, rel=1e-14)
    v = np.array([1.0, 2.0])
    assert artificial_viscosity(np.zeros(2), np.ones(2), v, v, 1000, 1000, MAT, VISC, 1.3) == 0.0


def test_renormalisation_on_uniform_1d_lattice():
    x = np.arange(20, dtype=float)[:, None]
    p = Particles.create(x, rho=MAT.rho0, m=MAT.rho0)
    kern = KernelSetup(KernelFamily.CUBIC, 1.3)
    table = neighbors.build(p.x, kern.radius)
    B, _ = renormalization_matrix(10, p, table, kern)
    moment = np.zeros((1, 1))
    for j in table.neighbors(10):
        g = eval_grad(kern.pair_spec(1.0, 1), p.x[10] - p.x[j])
        moment += np.outer(p.x[10] - p.x[j], g)
    np.testing.assert_allclose(B @ moment, -np.eye(1), rtol=1e-10)


@pytest.mark.parametrize("backend", BACKENDS)
def test_approaching_pair_compresses(backend):
    p = Particles.create(np.array([[0.0], [1.0]]), rho=MAT.rho0, m=MAT.rho0,
                         v=np.array([[1.0], [-1.0]]))
    r = rates_for(p, backend=backend, renormalize=False)
    assert np.all(r.drho > 0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_one_dimensional_stress_rate_with_zero_poisson(backend):
    # with nu = 0 the total stress rate reduces to E dv/dx
    mat = MaterialModel(rho0=1000.0, E=1e7, nu=0.0)
    errs = []
    for dp in (0.1, 0.05):
        x = np.arange(0.0, 2 * np.pi, dp)[:, None]
        p = Particles.create(x, rho=mat.rho0, m=mat.rho0 * dp, v=np.sin(x))
        kern = KernelSetup(KernelFamily.CUBIC, 1.5 * dp)
        r = compute_rates(p, neighbors.build(p.x, kern.radius), mat, ViscosityParams(0.0, 0.0),
                          kern, 0.5, True, backend)
        dsigma = -mat.K / mat.rho0 * r.drho + r.dS[:, 0, 0]
        inner = slice(len(x) // 4, 3 * len(x) // 4)
        errs.append(np.max(np.abs(dsigma[inner] - mat.E * np.cos(x[inner, 0]))) / mat.E)
    assert errs[1] < 1e-2
    assert errs[0] / errs[1] > 3.0  # second order in dp


@pytest.mark.parametrize("backend", BACKENDS)
def test_xsph_off_moves_with_velocity(backend):
    p = random_state(jittered_patch(), seed=5)
    r = rates_for(p, backend=backend, eps=0.0)
    np.testing.assert_array_equal(r.dx, p.v)

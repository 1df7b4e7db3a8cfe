import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kindg.kinetic import (MODEL_NAMES, GravitySource, corrected_equilibrium, moment_defect, NonpositiveDensity, PenalizationSource, PicardDiverged,
                           UnknownModel, collide, equilibrium_component, make_model, reduce_w, relax_velocity,
                           source_solve, source_step)

D2Q9 = make_model("d2q9", 1.0)


def test_d2q9_project_examples():
    np.testing.assert_allclose(D2Q9.project(D2Q9.weights), [1, 0, 0], atol=1e-16)
    np.testing.assert_array_equal(D2Q9.project(np.zeros(9)), [0, 0, 0])
    f = np.zeros(9)
    f[1] = 1.0
    np.testing.assert_array_equal(D2Q9.project(f), [1, 1, 0])


@pytest.mark.parametrize("name", MODEL_NAMES)
def test_lattice_moments(name):
    model = make_model(name, 2.5)
    wv = model.weights
    assert abs(wv.sum() - 1) < 1e-15
    np.testing.assert_allclose(wv @ model.velocities, 0, atol=1e-15)
    second = np.einsum("i,ia,ib->ab", wv, model.velocities, model.velocities)
    np.testing.assert_allclose(second, model.c2 * np.eye(model.dim), atol=1e-14)


def test_equilibrium_examples():
    np.testing.assert_allclose(D2Q9.equilibrium([1.0, 0, 0]), D2Q9.weights)
    np.testing.assert_allclose(D2Q9.equilibrium([2.0, 0, 0]), 2 * D2Q9.weights)
    np.testing.assert_allclose(D2Q9.project(D2Q9.equilibrium([1.0, 0.03, 0.0])), [1, 0.03, 0], atol=1e-15)
    with pytest.raises(NonpositiveDensity):
        D2Q9.equilibrium([0.0, 0, 0])


@settings(max_examples=60, deadline=None)
@given(rho=st.floats(0.1, 5), ux=st.floats(-0.3, 0.3), uy=st.floats(-0.3, 0.3), lam=st.floats(0.5, 8))
def test_equilibrium_moments(rho, ux, uy, lam):
    model = make_model("d2q9", lam)
    w = np.array([rho, rho * ux, rho * uy])
    np.testing.assert_allclose(model.project(model.equilibrium(w)), w, rtol=1e-13, atol=1e-14)
    for i in range(9):
        assert abs(equilibrium_component(model, i, w) - model.equilibrium(w)[i]) < 1e-15 * rho * 10


def _random_state(rng, n=50, model=D2Q9):
    w = np.vstack([rng.uniform(0.5, 2, n), rng.uniform(-0.2, 0.2, (model.dim, n))])
    return model.equilibrium(w) * (1 + 0.1 * rng.standard_normal((model.n_v, n)))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10 ** 6), tau=st.floats(1e-6, 10), dt=st.floats(1e-6, 1))
def test_collision_conserves_moments(seed, tau, dt):
    f = _random_state(np.random.default_rng(seed))
    w = D2Q9.project(f)
    w2 = D2Q9.project(collide(D2Q9, f, dt, tau))
    scale = np.max(np.abs(w), axis=1, keepdims=True) + 1.0
    assert np.all(np.abs(w2 - w) <= 5 * np.finfo(float).eps * 9 * scale)


def test_collision_examples():
    f = _random_state(np.random.default_rng(1))
    feq = corrected_equilibrium(D2Q9, D2Q9.project(f))
    np.testing.assert_array_equal(collide(D2Q9, f, 0.3, 0.0), 2 * feq - f)
    np.testing.assert_allclose(collide(D2Q9, f, 0.3, 0.15), feq, atol=1e-16)
    np.testing.assert_allclose(collide(D2Q9, feq, 0.7, 0.01), feq, rtol=1e-13)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10 ** 6), dt=st.floats(1e-3, 1), r=st.floats(0.51, 20))
def test_collision_time_symmetry(seed, dt, r):
    tau = r * dt
    f = _random_state(np.random.default_rng(seed))
    back = collide(D2Q9, collide(D2Q9, f, dt, tau), -dt, tau)
    np.testing.assert_allclose(back, f, rtol=1e-12, atol=1e-12)


def test_corrected_equilibrium_moments():
    rng = np.random.default_rng(8)
    w = np.vstack([rng.uniform(0.5, 2, 500), rng.uniform(-0.3, 0.3, (2, 500))])
    raw = np.abs(D2Q9.project(D2Q9.equilibrium(w)) - w).max()
    fixed = np.abs(D2Q9.project(corrected_equilibrium(D2Q9, w)) - w).max()
    assert fixed <= raw and fixed <= 4 * np.finfo(float).eps
    np.testing.assert_allclose(corrected_equilibrium(D2Q9, w), D2Q9.equilibrium(w), rtol=1e-14, atol=1e-16)


def test_relax_velocity_matches_collide():
    rng = np.random.default_rng(2)
    f = _random_state(rng)
    w = D2Q9.project(f)
    out = collide(D2Q9, f, 0.2, 0.05, theta=0.7)
    dfc = moment_defect(D2Q9, w)
    for i in range(9):
        fi = f[i].copy()
        relax_velocity(D2Q9, i, fi, w, 0.2, 0.05, theta=0.7, defect=dfc)
        np.testing.assert_allclose(fi, out[i], rtol=1e-14)
    with pytest.raises(ValueError):
        collide(D2Q9, f, 0.2, 0.0, theta=0.0)


def test_reduction_examples_and_commutation():
    feq = D2Q9.equilibrium(np.array([[1.0], [0.0], [0.0]]))
    W = np.zeros((3, 1))
    for i in range(9):
        reduce_w(D2Q9, i, feq[i], W)
    np.testing.assert_allclose(W[:, 0], [1, 0, 0], atol=1e-16)
    W = np.zeros((3, 1))
    reduce_w(D2Q9, 0, np.array([4 / 9]), W)
    np.testing.assert_array_equal(W[:, 0], [4 / 9, 0, 0])
    f = _random_state(np.random.default_rng(3))
    ref = D2Q9.project(f)
    for seed in range(5):
        W = np.zeros_like(ref)
        for i in np.random.default_rng(seed).permutation(9):
            reduce_w(D2Q9, i, f[i], W)
        np.testing.assert_allclose(W, ref, atol=1e-14)


def test_lift_source_examples():
    np.testing.assert_array_equal(D2Q9.lift_source(np.zeros(3)), np.zeros(9))
    g = D2Q9.lift_source(np.array([1.0, 0, 0]))
    np.testing.assert_allclose(g, D2Q9.weights)
    np.testing.assert_allclose(D2Q9.project(g), [1, 0, 0], atol=1e-16)
    rho, grav = 1.3, 16.0
    g = D2Q9.lift_source(np.array([0.0, 0.0, -rho * grav]))
    np.testing.assert_allclose(D2Q9.project(g), [0, 0, -rho * grav], atol=1e-13)


def test_gravity_source_one_picard_iteration():
    model = make_model("d2q9", 4.0)
    f = _random_state(np.random.default_rng(4), model=model)
    x = np.zeros((2, f.shape[1]))
    f2, w2, it = source_step(model, GravitySource(16.0), x, f, 0.01)
    assert it == 1
    w = model.project(f)
    np.testing.assert_allclose(w2[:2], w[:2])
    np.testing.assert_allclose(w2[2], w[2] - 0.01 * 16.0 * w[0])
    np.testing.assert_allclose(model.project(f2), w2, atol=1e-13)


def test_zero_source_is_identity():
    f = _random_state(np.random.default_rng(5))
    x = np.zeros((2, f.shape[1]))
    src = PenalizationSource(0.0, 40.0, [0, 0], [1, 0, 0])
    f2, w2, _ = source_step(D2Q9, src, x, f, 0.1)
    np.testing.assert_array_equal(f2, f)


@pytest.mark.parametrize("dt", [1e-3, 0.1, 10.0, 1e4])
def test_penalization_fixed_point(dt):
    theta, K = 0.5, 300.0
    src = PenalizationSource(K, 40.0, [0.0, 0.0], [1.0, 0.0, 0.0])
    x = np.zeros((2, 1))
    w = np.array([[1.1], [0.05], [-0.02]])
    ws = src.w_s[:, None]
    w2, _, _ = source_solve(src, x, w, dt, theta)
    exact = (w + dt * (1 - theta) * K * (ws - w) + theta * dt * K * ws) / (1 + theta * dt * K)
    np.testing.assert_allclose(w2, exact, rtol=1e-12, atol=1e-14)
    w1, _, _ = source_solve(src, x, w, dt, 1.0)
    if dt * K > 1e5:
        np.testing.assert_allclose(w1, ws, atol=1e-4)


def test_picard_divergence_reported():
    class Stiff:
        def __call__(self, x, w):
            return 50.0 * w ** 3

        def stiffness(self, x):
            return 0.0

    with pytest.raises(PicardDiverged), np.errstate(over="ignore", invalid="ignore"):
        source_solve(Stiff(), np.zeros((2, 1)), np.ones((3, 1)), 1.0, max_iter=20)


def test_unknown_model():
    with pytest.raises(UnknownModel):
        make_model("d2q7")
    assert make_model("D3Q27").n_v == 27

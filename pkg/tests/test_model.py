import math
import warnings

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import erf

from covbridge import (ConfigError, DimensionMismatch, FullState, MatrixFunction, ModelSpec,
                       NotControllable, NotPositiveDefinite, Output, TimeGrid, assert_controllable,
                       compute_prior_moments, ou_example)
from covbridge.model import controllability_ratio

from conftest import random_instances


def scalar(a, T=1.0):
    return ModelSpec(A=[[a]], B=[[1.0]], C=[[1.0]], T=T, Sigma0=[[1.0]],
                     target=Output(np.array([[1.0]])))


def test_matrix_function_constant_and_interpolated():
    f = MatrixFunction([[1.0, 2.0]])
    assert f.is_constant and f.shape == (1, 2)
    assert f.at([0.0, 5.0]).shape == (2, 1, 2)
    g = MatrixFunction([[[0.0]], [[2.0]]], times=[0.0, 1.0])
    assert g(0.25)[0, 0] == pytest.approx(0.5)
    # held outside the sampled range
    assert g(3.0)[0, 0] == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        MatrixFunction([[[0.0]], [[2.0]]], times=[1.0, 0.0])
    with pytest.raises(DimensionMismatch):
        MatrixFunction([[[0.0]], [[2.0]]], times=[0.0, 0.5, 1.0])


def test_spec_validation():
    with pytest.raises(DimensionMismatch):
        ModelSpec(A=np.eye(2), B=[[1.0]], C=[[1.0, 0.0]], T=1.0, Sigma0=np.eye(2),
                  target=Output(np.eye(1)))
    with pytest.raises(DimensionMismatch):
        ModelSpec(A=np.eye(2), B=[[1.0], [0.0]], C=np.ones((3, 2)), T=1.0, Sigma0=np.eye(2),
                  target=Output(np.eye(3)))
    with pytest.raises(NotPositiveDefinite):
        ModelSpec(A=np.eye(2), B=[[1.0], [0.0]], C=[[1.0, 0.0]], T=1.0,
                  Sigma0=np.diag([1.0, -1.0]), target=Output(np.eye(1)))
    with pytest.raises(ConfigError):
        ModelSpec(A=np.eye(1), B=[[1.0]], C=[[1.0]], T=0.0, Sigma0=np.eye(1),
                  target=Output(np.eye(1)))
    spec = ModelSpec(A=np.eye(2), B=[[1.0], [0.0]], C=[[1.0, 0.0]], T=1.0, Sigma0=np.eye(2),
                     target=FullState(np.eye(2)))
    assert (spec.n, spec.m, spec.p) == (2, 1, 1)


def test_time_grid():
    g = TimeGrid(2.0, 4)
    assert g.h == 0.5
    assert np.allclose(g.nodes, [0, 0.5, 1, 1.5, 2])
    assert g.refined(2).size == 9
    with pytest.raises(ConfigError):
        TimeGrid(1.0, 1)


def test_scalar_zero_drift():
    pm = compute_prior_moments(scalar(0.0), TimeGrid(1.0, 100))
    assert np.allclose(pm.PhiT0, 1.0, atol=1e-15)
    assert np.allclose(pm.MT, 1.0, atol=1e-14)
    assert np.allclose(pm.S, [[1, 1], [1, 2]], atol=1e-14)


def test_scalar_stable_drift():
    pm = compute_prior_moments(scalar(-1.0), TimeGrid(1.0, 1000))
    assert pm.PhiT0[0, 0] == pytest.approx(math.exp(-1), rel=1e-12)
    assert pm.MT[0, 0] == pytest.approx((1 - math.exp(-2)) / 2, rel=1e-12)


def test_time_varying_drift():
    # a(t) = t: Phi(t,0) = exp(t^2/2), M_{0,1} = e * sqrt(pi)/2 * erf(1)
    spec = ModelSpec(A=MatrixFunction([[[0.0]], [[1.0]]], times=[0.0, 1.0]), B=[[1.0]],
                     C=[[1.0]], T=1.0, Sigma0=[[1.0]], target=Output(np.eye(1)))
    pm = compute_prior_moments(spec, TimeGrid(1.0, 1000))
    t = pm.grid.nodes
    assert np.allclose(pm.phi_from0[:, 0, 0], np.exp(t ** 2 / 2), rtol=1e-12)
    assert pm.MT[0, 0] == pytest.approx(math.e * math.sqrt(math.pi) / 2 * erf(1.0), rel=1e-11)
    assert np.allclose(pm.phi_to_T[:, 0, 0], np.exp((1 - t ** 2) / 2), rtol=1e-12)


def test_oscillator_matches_expm():
    spec = ou_example()
    pm = compute_prior_moments(spec, TimeGrid(1.0, 1000))
    A = spec.A(0.0)
    E = expm(A)
    assert np.linalg.norm(pm.PhiT0 - E) <= 1e-8 * np.linalg.norm(E)
    for k in (0, 250, 700):
        t = pm.grid.nodes[k]
        assert np.allclose(pm.phi_from0[k], expm(A * t), rtol=0, atol=1e-12)
        assert np.allclose(pm.phi_to_T[k], expm(A * (1 - t)), rtol=0, atol=1e-12)


@pytest.mark.parametrize("spec", [ou_example()] + random_instances(5, seed=7),
                         ids=lambda s: f"n{s.n}")
def test_prior_invariants(spec):
    pm = compute_prior_moments(spec, TimeGrid(spec.T, 500))
    n = spec.n
    I = np.eye(n)
    assert np.allclose(pm.phi_from0[0], I, atol=0)
    assert np.allclose(pm.phi_to_T[-1], I, atol=0)
    scale = np.linalg.norm(pm.MT)
    for k in range(0, pm.grid.steps + 1, 50):
        Phi_T_t, Phi_t_0 = pm.phi_to_T[k], pm.phi_from0[k]
        assert np.linalg.norm(Phi_T_t @ Phi_t_0 - pm.PhiT0) <= 1e-6 * np.linalg.norm(pm.PhiT0)
        comp = Phi_T_t @ pm.gram_from0[k] @ Phi_T_t.T + pm.gram_to_T[k]
        assert np.linalg.norm(comp - pm.MT) <= 1e-6 * scale
        for G in (pm.gram_from0[k], pm.gram_to_T[k]):
            assert np.allclose(G, G.T, atol=1e-14)
            assert np.min(np.linalg.eigvalsh(G)) >= -1e-12 * scale
    assert np.all(np.linalg.eigvalsh(pm.S) > 0)
    assert np.allclose(pm.ST, pm.PhiT0 @ spec.Sigma0 @ pm.PhiT0.T + pm.MT, atol=1e-13)
    Sinv = np.linalg.inv(pm.S)
    assert np.linalg.norm(Sinv - pm.Sinv) <= 1e-8 * np.linalg.norm(Sinv)


def test_controllability():
    assert_controllable(compute_prior_moments(ou_example(), TimeGrid(1.0, 200)))
    bad = ModelSpec(A=np.zeros((2, 2)), B=[[1.0], [0.0]], C=[[1.0, 0.0]], T=1.0,
                    Sigma0=np.eye(2), target=Output(np.eye(1)))
    pm = compute_prior_moments(bad, TimeGrid(1.0, 200))
    with pytest.raises(NotControllable) as info:
        assert_controllable(pm)
    assert info.value.ratio == controllability_ratio(pm)
    dbl = ModelSpec(A=[[0.0, 1.0], [0.0, 0.0]], B=[[0.0], [1.0]], C=[[1.0, 0.0]], T=1.0,
                    Sigma0=np.eye(2), target=Output(np.eye(1)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert_controllable(compute_prior_moments(dbl, TimeGrid(1.0, 200)))


def test_near_uncontrollable_warns():
    eps = 1e-4
    spec = ModelSpec(A=np.zeros((2, 2)), B=[[1.0], [eps]], C=[[1.0, 0.0]], T=1.0,
                     Sigma0=np.eye(2), target=Output(np.eye(1)))
    spec.B = MatrixFunction([[[1.0], [0.0]], [[1.0], [eps]]], times=[0.0, 1.0])
    pm = compute_prior_moments(spec, TimeGrid(1.0, 200))
    r = controllability_ratio(pm)
    assert 1e-10 < r < 1e-7
    with pytest.warns(RuntimeWarning):
        assert_controllable(pm)


def test_grid_horizon_mismatch():
    with pytest.raises(ConfigError):
        compute_prior_moments(ou_example(), TimeGrid(2.0, 10))

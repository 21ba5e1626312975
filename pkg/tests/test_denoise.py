import math

import numpy as np
import pytest

from afddim.channel import ChainSpace
from afddim.denoise import (
    BayesDenoiser, DenoiserQuery, LearnedDenoiser, MlpDenoiser, TrainingError, TrainingSet,
    bayes_epsilon, bayes_x0, bayes_x0_array, generate_training_set, mlp_epsilon,
    sinusoidal_embedding, train,
)
from afddim.signal import build_constellation
from oracles import posterior_mean_loop


@pytest.mark.parametrize("M", [4, 16, 64])
def test_bayes_matches_loop(M, rng):
    c = build_constellation(M)
    abar = 0.6
    x = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    ref = posterior_mean_loop(x, math.sqrt(abar), 1 - abar, c.points, c.prior)
    assert np.allclose(bayes_x0_array(x, abar, c), ref, rtol=0, atol=1e-13)


def test_bayes_non_uniform_prior(rng):
    prior = np.linspace(1, 4, 16)
    c = build_constellation(16, prior)
    x = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    ref = posterior_mean_loop(x, math.sqrt(0.3), 0.7, c.points, c.prior)
    assert np.allclose(bayes_x0_array(x, 0.3, c), ref, atol=1e-13)


def test_bayes_limits():
    c = build_constellation(4)
    # abar -> 0: prior mean; abar = 1: the point itself
    assert abs(bayes_x0(DenoiserQuery.at(0.3 + 0.2j, 1e-12), c)) < 1e-6
    q = DenoiserQuery(c.points[2] + 0.01, 1.0, 0.0)
    assert bayes_x0(q, c) == c.points[2]
    with pytest.raises(ValueError):
        bayes_epsilon(q, c)
    with pytest.raises(ValueError):
        DenoiserQuery(0j, 0.5, 0.5)


def test_bayes_epsilon_consistent():
    c = build_constellation(16)
    q = DenoiserQuery.at(0.4 - 0.1j, 0.8)
    eps = bayes_epsilon(q, c)
    x0 = bayes_x0(q, c)
    assert abs(q.x_t - (math.sqrt(0.8) * x0 + math.sqrt(0.2) * eps)) < 1e-14
    e2, x2 = BayesDenoiser(c).predict(np.array([q.x_t]), 1, 0.8, q.lambda_t)
    assert abs(e2[0] - eps) < 1e-15 and x2[0] == x0


def test_embedding():
    e = sinusoidal_embedding([0, 1, 5], pairs=8)
    assert e.shape == (3, 16)
    assert np.all(e[0, :8] == 0) and np.all(e[0, 8:] == 1)
    assert math.isclose(e[1, 0], math.sin(1.0))


def _tiny_batch(rng, n=32):
    x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    t = rng.integers(1, 11, n)
    lam = rng.uniform(-2, 4, n)
    target = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
    return x, t, lam, target


def test_gradient_check_at_init(rng):
    model = MlpDenoiser(hidden=16, rng=np.random.default_rng(7))
    x, t, lam, target = _tiny_batch(rng)
    _, grads = model.loss_and_grads(x, t, lam, target)
    params = model.params()
    pick = np.random.default_rng(8)
    worst = 0.0
    for _ in range(10):
        k = int(pick.integers(len(params)))
        flat = params[k].reshape(-1)
        i = int(pick.integers(flat.size))
        h = 1e-6
        old = flat[i]
        flat[i] = old + h
        lp, _ = model.loss_and_grads(x, t, lam, target)
        flat[i] = old - h
        lm, _ = model.loss_and_grads(x, t, lam, target)
        flat[i] = old
        fd = (lp - lm) / (2 * h)
        an = grads[k].reshape(-1)[i]
        worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), 1e-8))
    assert worst < 1e-4


def test_checkpoint_roundtrip(tmp_path, rng):
    model = MlpDenoiser(hidden=8, rng=rng, step_lambdas=[1.0, 0.5], amplitude=0.9)
    path = tmp_path / "m.json"
    model.save(path)
    back = MlpDenoiser.load(path)
    x, t, lam, _ = _tiny_batch(rng, 5)
    a = model.predict(x, t, lam)
    b = back.predict(x, t, lam)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    d = model.to_dict()
    d["format"] = "other"
    with pytest.raises(ValueError):
        MlpDenoiser.from_dict(d)


def test_step_for_lambda():
    m = MlpDenoiser(hidden=4, rng=np.random.default_rng(0), step_lambdas=[3.0, 2.0, 1.0])
    assert m.step_for_lambda(2.2) == 2
    assert MlpDenoiser(hidden=4, rng=np.random.default_rng(0)).step_for_lambda(1.0) is None
    q = DenoiserQuery.at(0.1j, 0.7)
    assert isinstance(mlp_epsilon(m, q), complex)


def test_training_samples_regenerate(rng):
    c = build_constellation(4)
    data = generate_training_set(ChainSpace(hops=5), c, 2000, rng)
    recon = np.sqrt(data.abar_t) * data.x0 + np.sqrt(1 - data.abar_t) * data.target_eps
    assert np.array_equal(recon, data.x_t)
    # targets are unit-variance circular noise
    assert abs(np.mean(np.abs(data.target_eps) ** 2) - 1.0) < 0.1
    assert set(np.unique(data.t)) <= set(range(1, 6))
    s = data[0]
    assert s.t == data.t[0] and s.x_t == data.x_t[0]


def test_training_reduces_loss_and_is_seeded():
    c = build_constellation(4)
    data = generate_training_set(ChainSpace(hops=4), c, 1500, np.random.default_rng(1))
    m1 = train(MlpDenoiser(hidden=32, rng=np.random.default_rng(2)), data, epochs=3,
               rng=np.random.default_rng(3))
    m2 = train(MlpDenoiser(hidden=32, rng=np.random.default_rng(2)), data, epochs=3,
               rng=np.random.default_rng(3))
    assert m1.history[-1] < m1.history[0]
    assert m1.history == m2.history
    eps, x0 = LearnedDenoiser(m1).predict(data.x_t[:10], 2, 0.5, 0.0)
    assert eps.shape == x0.shape == (10,)


def test_training_non_finite_raises():
    c = build_constellation(4)
    data = generate_training_set(ChainSpace(hops=2), c, 64, np.random.default_rng(1))
    bad = TrainingSet(data.x_t.copy(), data.t, data.abar_t, data.target_eps.copy(), data.mu, data.v, data.x0)
    bad.target_eps[3] = np.nan
    with pytest.raises(TrainingError):
        train(MlpDenoiser(hidden=4, rng=np.random.default_rng(0)), bad, epochs=1)


def test_posterior_permutation_equivariant(rng):
    c = build_constellation(16, prior=np.linspace(1, 2, 16))
    perm = rng.permutation(16)
    from afddim.signal import Constellation

    p = Constellation(16, c.points[perm], [c.bit_labels[i] for i in perm], c.prior[perm])
    x = rng.standard_normal(40) + 1j * rng.standard_normal(40)
    assert np.allclose(bayes_x0_array(x, 0.4, c), bayes_x0_array(x, 0.4, p), rtol=0, atol=1e-14)


def test_bayes_residual_is_centred(rng):
    # E[eps_hat] = 0 for the posterior-mean residual
    c = build_constellation(16)
    n, abar = 200000, 0.7
    idx = rng.integers(0, 16, n)
    z = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)
    x = math.sqrt(abar) * c.points[idx] + math.sqrt(1 - abar) * z
    eps, _ = BayesDenoiser(c).predict(x, 1, abar, 0.0)
    se = np.std(eps) / math.sqrt(n)
    assert abs(eps.mean().real) < 3 * se and abs(eps.mean().imag) < 3 * se


def test_trained_close_to_bayes_at_10db():
    c = build_constellation(4)
    space = ChainSpace(hops=10, snr_db_range=(5.0, 15.0))
    data = generate_training_set(space, c, 10000, np.random.default_rng(21))
    model = train(MlpDenoiser(rng=np.random.default_rng(22)), data, rng=np.random.default_rng(23))
    held = generate_training_set(ChainSpace(hops=10, snr_db_range=(10.0, 10.0)), c, 2000, np.random.default_rng(24))
    eps_m, _ = model.predict(held.x_t, held.t, held.lam)
    x0 = bayes_x0_array(held.x_t, held.abar_t, c)
    eps_b = (held.x_t - np.sqrt(held.abar_t) * x0) / np.sqrt(1 - held.abar_t)
    assert np.mean(np.abs(eps_m - eps_b) ** 2) < 0.1
    # fixed weights, fixed input: bit-identical
    assert np.array_equal(model.predict(held.x_t, held.t, held.lam)[0], eps_m)

import hashlib

import mpmath
import numpy as np
import pytest

from cganlab.data import mixture_3x2_spec, synth_mixture
from cganlab.errors import ConfigError, ContractError, DataError
from cganlab.models import NetworkSpec, pretrain_approximator
from cganlab.rng import RngStream
from cganlab.tensor import Tensor, backward
from cganlab.training import (TrainConfig, d_loss, g_loss,
                              irgan_regularizer, train)
from conftest import numeric_grad

mpmath.mp.dps = 50


def small_cfg(variant="sbp", steps=5, seed=0, **kw):
    base = dict(variant=variant, total_steps=steps, batch_size=32, lr=1e-3,
                seed=seed, noise_dim=4, g_hidden=[8, 8], d_hidden=[8, 8])
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def tiny_mixture():
    ds, oracle = synth_mixture(mixture_3x2_spec(), 120, seed=5)
    return ds


@pytest.fixture(scope="module")
def tiny_q(tiny_mixture):
    params, _ = pretrain_approximator(
        tiny_mixture, tiny_mixture, NetworkSpec([8], head="softmax"), 150,
        RngStream(2, ("q",)), hyper={"lr": 1e-2, "beta1": 0.9, "beta2": 0.999,
                                     "epsilon": 1e-8})
    return params


# ----------------------------------------------------------------------
# losses


def test_d_loss_indifferent_discriminator():
    val = d_loss(Tensor([0.5, 0.5]), Tensor([0.5, 0.5])).item()
    assert abs(val - 2.0 * np.log(2.0)) < 1e-12


def test_d_loss_confident_discriminator_approaches_zero():
    val = d_loss(Tensor([0.999999, 0.999999]), Tensor([1e-6, 1e-6])).item()
    assert 0.0 < val < 1e-5


def test_d_loss_matches_extended_precision_sum(rng):
    dr = rng.uniform(0.01, 0.99, 16)
    df = rng.uniform(0.01, 0.99, 16)
    got = d_loss(Tensor(dr), Tensor(df)).item()
    want = float(-sum(mpmath.log(mpmath.mpf(v)) for v in dr) / 16
                 - sum(mpmath.log(1 - mpmath.mpf(v)) for v in df) / 16)
    assert abs(got - want) < 1e-12


def test_d_loss_rejects_boundary_probabilities():
    with pytest.raises(ContractError):
        d_loss(Tensor([1.0]), Tensor([0.5]))
    with pytest.raises(ContractError):
        d_loss(Tensor([0.5]), Tensor([0.0]))


def test_g_loss_values_at_half():
    assert abs(g_loss(Tensor([0.5]), "minimax").item() - np.log(0.5)) < 1e-12
    assert abs(g_loss(Tensor([0.5]), "non_saturating").item() - np.log(2.0)) < 1e-12


def test_g_loss_matches_extended_precision_sum(rng):
    df = rng.uniform(0.01, 0.99, 12)
    got = g_loss(Tensor(df), "minimax").item()
    want = float(sum(mpmath.log(1 - mpmath.mpf(v)) for v in df) / 12)
    assert abs(got - want) < 1e-12


@pytest.mark.parametrize("mode", ["minimax", "non_saturating"])
def test_g_loss_decreases_as_discriminator_is_fooled(mode):
    g = numeric_grad(lambda x: g_loss(Tensor(x), mode).item(),
                     np.array([0.3, 0.5, 0.7]))
    assert np.all(g < 0.0)


def test_g_loss_unknown_mode():
    with pytest.raises(ConfigError):
        g_loss(Tensor([0.5]), "wasserstein")


def test_regularizer_zero_when_q_is_certain():
    q = Tensor([[1.0 - 2e-16, 1e-16, 1e-16]])
    c = np.array([[1.0, 0.0, 0.0]])
    assert irgan_regularizer(q, c, 1.0).item() < 1e-12


def test_regularizer_uniform_q():
    q = Tensor(np.full((4, 10), 0.1))
    c = np.zeros((4, 10))
    c[np.arange(4), [0, 3, 5, 9]] = 1.0
    val = irgan_regularizer(q, c, 1.0).item()
    assert abs(val - np.log(10.0)) < 1e-12


def test_regularizer_scales_with_lambda_and_zero_lambda(rng):
    q_raw = rng.uniform(0.1, 1.0, (3, 4))
    q = Tensor(q_raw / q_raw.sum(axis=1, keepdims=True))
    c = np.zeros((3, 4))
    c[np.arange(3), [0, 1, 2]] = 1.0
    base = irgan_regularizer(q, c, 1.0).item()
    assert base >= 0.0
    assert abs(irgan_regularizer(q, c, 2.5).item() - 2.5 * base) < 1e-12
    assert irgan_regularizer(q, c, 0.0).item() == 0.0


def test_regularizer_rejects_non_distribution_rows():
    c = np.array([[1.0, 0.0]])
    with pytest.raises(ContractError):
        irgan_regularizer(Tensor([[0.9, 0.3]]), c, 1.0)
    with pytest.raises(ContractError):
        irgan_regularizer(Tensor([[0.5, 0.5]]), np.array([[0.4, 0.6]]), 1.0)


def test_regularizer_backpropagates_into_q_output(rng):
    q_raw = rng.uniform(0.1, 1.0, (2, 3))
    q_arr = q_raw / q_raw.sum(axis=1, keepdims=True)
    c = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    q = Tensor(q_arr)
    backward(irgan_regularizer(q, c, 1.5))
    expected = -1.5 * c / np.maximum(q_arr, 1e-12) / 2.0
    np.testing.assert_allclose(q.grad, expected, rtol=1e-10)


# ----------------------------------------------------------------------
# the loop


def test_zero_learning_rate_is_bitwise_noop(tiny_mixture):
    cfg = small_cfg(lr=0.0, steps=3)
    g, d, _ = train(cfg, tiny_mixture)
    g0 = {n: t.data.copy() for n, t in g.named().items()}
    d0 = {n: t.data.copy() for n, t in d.named().items()}
    g2, d2, _ = train(small_cfg(lr=0.0, steps=6), tiny_mixture, g=g, d=d, start_step=3)
    for name, t in g2.named().items():
        assert np.array_equal(t.data, g0[name])
    for name, t in d2.named().items():
        assert np.array_equal(t.data, d0[name])


def test_total_steps_zero_returns_initialized_params(tiny_mixture):
    cfg = small_cfg(steps=0, seed=9)
    g, d, log = train(cfg, tiny_mixture)
    from cganlab.training import build_models
    g_ref, d_ref = build_models(cfg, tiny_mixture.image_shape, tiny_mixture.cond_dim,
                                RngStream(9, ("train", "sbp")))
    for name, t in g.named().items():
        assert np.array_equal(t.data, g_ref.named()[name].data)
    assert log.rows == []


def test_training_is_bit_deterministic(tiny_mixture):
    runs = []
    for _ in range(2):
        g, d, log = train(small_cfg(steps=8, seed=13), tiny_mixture)
        digest = hashlib.sha256()
        for name in sorted(dict(g.named())):
            digest.update(g.named()[name].data.tobytes())
        for name in sorted(dict(d.named())):
            digest.update(d.named()[name].data.tobytes())
        runs.append((digest.hexdigest(),
                     log.column("d_loss"), log.column("g_loss")))
    assert runs[0] == runs[1]


def test_resume_reproduces_uninterrupted_run(tiny_mixture):
    full_g, full_d, full_log = train(small_cfg(steps=10, seed=21), tiny_mixture)
    part_g, part_d, part_log = train(small_cfg(steps=5, seed=21), tiny_mixture)
    res_g, res_d, res_log = train(small_cfg(steps=10, seed=21), tiny_mixture,
                                  g=part_g, d=part_d, start_step=5)
    assert (part_log.column("d_loss") + res_log.column("d_loss")
            == full_log.column("d_loss"))
    assert (part_log.column("g_loss") + res_log.column("g_loss")
            == full_log.column("g_loss"))
    for name, t in res_g.named().items():
        assert np.array_equal(t.data, full_g.named()[name].data)
    for name, t in res_d.named().items():
        assert np.array_equal(t.data, full_d.named()[name].data)


def test_irgan_requires_q_and_leaves_it_frozen(tiny_mixture, tiny_q):
    with pytest.raises(ConfigError):
        train(small_cfg("irgan", lam=1.0), tiny_mixture)
    before = hashlib.sha256()
    for name in sorted(dict(tiny_q.named())):
        before.update(tiny_q.named()[name].data.tobytes())
    _, _, log = train(small_cfg("irgan", steps=6, lam=1.0), tiny_mixture, q_params=tiny_q)
    after = hashlib.sha256()
    for name in sorted(dict(tiny_q.named())):
        after.update(tiny_q.named()[name].data.tobytes())
    assert before.hexdigest() == after.hexdigest()
    assert all(r["r_g"] is not None and r["r_g"] >= 0.0 for r in log.rows)


def test_lambda_config_contract(tiny_mixture, tiny_q):
    with pytest.raises(ConfigError):
        small_cfg("irgan", lam=0.0).validate()
    with pytest.raises(ConfigError):
        small_cfg("cgan", lam=0.5).validate()
    with pytest.raises(ConfigError):
        train(small_cfg("cgan", steps=1), tiny_mixture, q_params=tiny_q)


def test_non_irgan_rows_have_no_regularizer_entry(tiny_mixture):
    _, _, log = train(small_cfg(steps=2), tiny_mixture)
    assert all(r["r_g"] is None for r in log.rows)


def test_empty_and_undersized_dataset_rejected(tiny_mixture):
    with pytest.raises(DataError):
        train(small_cfg(batch_size=100000), tiny_mixture)


def test_step_failure_names_the_step(tiny_mixture, monkeypatch):
    import cganlab.training as tr

    def boom(*a, **k):
        raise ContractError("synthetic failure")

    monkeypatch.setattr(tr, "d_loss", boom)
    with pytest.raises(ContractError) as err:
        train(small_cfg(steps=1), tiny_mixture)
    assert "training step 0" in str(err.value)


def test_trainlog_csv_shape(tiny_mixture):
    _, _, log = train(small_cfg(steps=3), tiny_mixture)
    text = log.to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "step,d_loss,g_loss,r_g,wall_ms"
    assert len(lines) == 4
    first = lines[1].split(",")
    assert first[0] == "0" and first[3] == ""
    assert float(first[4]) >= 0.0

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustfl.client import (
    ClientConfig,
    ClientState,
    ditto_step,
    make_upload,
    new_client,
    sync,
    train_round,
    unitize,
    update_lambda,
)
from robustfl.data import ClientData, PartitionConfig, gen_synthetic, partition_noniid
from robustfl.model import Batch, ModelLayout, ModelParams, init_params, logreg_layout, loss_and_grad, mlp_layout


def test_unitize_examples():
    d, n = unitize(np.array([3.0, 4.0]))
    assert np.allclose(d, [0.6, 0.8]) and n == 5.0
    d, n = unitize(np.array([1.0, 0.0, 0.0]))
    assert np.array_equal(d, [1.0, 0.0, 0.0]) and n == 1.0
    d, n = unitize(np.zeros(2))
    assert np.array_equal(d, [0.0, 0.0]) and n == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=10, max_size=10))
def test_upload_unit_invariant(values):
    layout = mlp_layout(1, 2, hidden=2)  # 4 hidden-layer + 6 last-layer params
    w = np.array(values)
    up = make_upload(w, layout)
    if up.amplitude == 0.0:
        assert not up.direction.any() and not up.last_dir.any()
    else:
        assert abs(np.linalg.norm(up.direction) - 1) < 1e-9
        if np.linalg.norm(w[layout.last_layer_start:]) >= 1e-12:
            assert abs(np.linalg.norm(up.last_dir) - 1) < 1e-9


def one_d_state(w_local, w_global, lam):
    layout = ModelLayout(((1, 1),))
    data = ClientData(Batch(np.zeros((1, 1)), np.zeros(1, dtype=int)), Batch(np.zeros((1, 1)), np.zeros(1, dtype=int)))
    return ClientState(ModelParams(np.array([w_local, 0.0]), layout), ModelParams(np.array([w_global, 0.0]), layout),
                       lam, data, np.random.default_rng(0))


def test_ditto_step_hand_example():
    state = one_d_state(2.0, 0.0, 1.0)
    cfg = ClientConfig(eta_local=0.1)
    out = ditto_step(state, state.data.train, cfg, grad=np.zeros(2))
    assert out.flat[0] == pytest.approx(1.8)
    assert state.w_global.flat[0] == 0.0


def test_ditto_step_reduces_to_sgd():
    rng = np.random.default_rng(1)
    layout = mlp_layout(3, 2, 4)
    batch = Batch(rng.normal(size=(5, 3)), rng.integers(0, 2, 5))
    for lam, same in ((0.0, False), (1.3, True)):
        wl = init_params(layout, rng)
        wg = wl.copy() if same else init_params(layout, rng)
        state = ClientState(wl.copy(), wg, lam, ClientData(batch, batch), rng)
        g = loss_and_grad(wl, batch)[1]
        out = ditto_step(state, batch, ClientConfig(eta_local=0.05))
        assert np.allclose(out.flat, wl.flat - 0.05 * g)


def test_update_lambda_examples():
    cfg = ClientConfig()
    assert update_lambda(0.0, 0.8, 0.7, cfg) == pytest.approx(0.05)
    assert update_lambda(1.99, 0.55, 0.0, cfg) == 2.0
    assert update_lambda(0.5, 0.7, 0.7, cfg) == pytest.approx(0.45)
    assert update_lambda(0.01, 0.7, 0.7, cfg) == 0.0


def test_client_config_validation():
    with pytest.raises(ValueError):
        ClientConfig(lambda_init=3.0)
    with pytest.raises(ValueError):
        ClientConfig(eta_global=0.0)


def small_client(seed=0, spread=0.3, kind="logreg", cfg=None):
    ds = gen_synthetic(2, 3, 30, spread, seed)
    part = partition_noniid(ds, PartitionConfig(2, 0.5, 0.2, seed))[0]
    layout = logreg_layout(3, 2) if kind == "logreg" else mlp_layout(3, 2, 4)
    init = init_params(layout, np.random.default_rng(seed))
    cfg = cfg or ClientConfig()
    return new_client(init, part, cfg, np.random.default_rng(seed + 1)), cfg


def test_train_round_single_step_closed_form():
    cfg = ClientConfig(eta_global=0.2, batch_size=10_000)
    state, _ = small_client(cfg=cfg)
    g = loss_and_grad(state.w_global, state.data.train)[1]
    up = train_round(state, np.zeros(state.w_global.flat.size), cfg)
    expected, amp = unitize(-0.2 * g)
    assert np.allclose(up.direction, expected) and amp == pytest.approx(up.amplitude)


def test_train_round_zero_gradient_fixed_point():
    layout = logreg_layout(2, 2)
    x = np.array([[1.0, 0.0], [0.0, 1.0]])
    data = ClientData(Batch(x, np.array([0, 1])), Batch(x, np.array([0, 1])))
    # a huge margin saturates the softmax: gradients underflow to exactly zero
    w = ModelParams(np.array([1e4, -1e4, -1e4, 1e4, 0.0, 0.0]), layout)
    state = new_client(w, data, ClientConfig(), np.random.default_rng(0))
    up = train_round(state, np.zeros(6), ClientConfig())
    assert up.amplitude == 0.0 and not up.direction.any()


def test_train_round_keeps_global_copy_and_lambda_bounds():
    cfg = ClientConfig(eta_local=0.3, eta_global=0.3, batch_size=4, epochs=2, eta_ditto=5.0)
    state, _ = small_client(kind="mlp", cfg=cfg)
    before = state.w_global.flat.copy()
    step = np.full(before.size, 0.01)
    train_round(state, step, cfg)
    # the global copy holds exactly the received model, not the local training result
    assert np.array_equal(state.w_global.flat, before + step)
    assert cfg.lambda_min <= state.lambda_ditto <= cfg.lambda_max
    assert np.allclose(sync(state, before + 3 * step), 2 * step)


def test_lambda_zero_local_model_is_isolated_sgd():
    cfg = ClientConfig(eta_local=0.1, eta_global=0.1, batch_size=8, acc_thres=1.0)
    state, _ = small_client(kind="mlp", cfg=cfg)
    # acc_thres=1 keeps lambda pinned at 0, so W_local ignores W_global
    ref = state.w_local.copy()
    ref_rng = np.random.default_rng(1)
    bogus = np.random.default_rng(9).normal(size=ref.flat.size)
    for _ in range(3):
        train_round(state, bogus, cfg)
        order = ref_rng.permutation(len(state.data.train))
        for s in range(0, order.size, cfg.batch_size):
            b = state.data.train.subset(order[s:s + cfg.batch_size])
            ref = ModelParams(ref.flat - cfg.eta_local * loss_and_grad(ref, b)[1], ref.layout)
    assert state.lambda_ditto == 0.0
    assert np.array_equal(state.w_local.flat, ref.flat)


def test_train_round_rejects_bad_broadcast():
    state, cfg = small_client()
    with pytest.raises(ValueError):
        train_round(state, np.zeros(3), cfg)


def test_acc_ref_evaluated_once_per_round(monkeypatch):
    import robustfl.client as client_mod

    calls = []
    real = client_mod.evaluate
    monkeypatch.setattr(client_mod, "evaluate", lambda p, b: calls.append(p) or real(p, b))
    cfg = ClientConfig(batch_size=5)
    state, _ = small_client(cfg=cfg)
    train_round(state, np.zeros(state.w_global.flat.size), cfg)
    n_batches = -(-len(state.data.train) // 5)
    # one reference evaluation plus one local evaluation per batch
    assert len(calls) == 1 + n_batches

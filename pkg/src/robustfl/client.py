"""Dual-model client: a copy of the global model trained with plain SGD and
a personalised model pulled toward it by an adaptive L2 coefficient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ClientData
from .model import Batch, ModelParams, evaluate, loss_and_grad, slice_last_layer

ZERO_NORM = 1e-12


@dataclass(frozen=True)
class ClientConfig:
    eta_local: float = 0.01
    eta_global: float = 0.01
    epochs: int = 1
    lambda_init: float = 0.0
    eta_ditto: float = 1.0
    acc_thres: float = 0.05
    lambda_min: float = 0.0
    lambda_max: float = 2.0
    batch_size: int = 32
    eval_cap: int | None = 256  # None evaluates on the full eval split

    def __post_init__(self):
        if not self.lambda_min <= self.lambda_init <= self.lambda_max:
            raise ValueError("need lambda_min <= lambda_init <= lambda_max")
        if self.eta_local <= 0 or self.eta_global <= 0:
            raise ValueError("learning rates must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs >= 0 and batch_size >= 1 required")


@dataclass
class Upload:
    direction: np.ndarray
    amplitude: float
    last_dir: np.ndarray


@dataclass
class ClientState:
    w_local: ModelParams
    w_global: ModelParams
    lambda_ditto: float
    data: ClientData
    rng: np.random.Generator


def new_client(init: ModelParams, data: ClientData, cfg: ClientConfig, rng: np.random.Generator) -> ClientState:
    return ClientState(init.copy(), init.copy(), cfg.lambda_init, data, rng)


def unitize(w: np.ndarray) -> tuple[np.ndarray, float]:
    w = np.asarray(w, dtype=np.float64)
    norm = float(np.linalg.norm(w))
    if norm < ZERO_NORM:
        return np.zeros_like(w), 0.0
    return w / norm, norm


def make_upload(w: np.ndarray, layout) -> Upload:
    direction, amplitude = unitize(w)
    last_dir, _ = unitize(slice_last_layer(w, layout))
    if amplitude == 0.0:
        last_dir = np.zeros_like(last_dir)
    return Upload(direction, amplitude, last_dir)


def ditto_step(state: ClientState, batch: Batch, cfg: ClientConfig, grad: np.ndarray | None = None) -> ModelParams:
    """One regularised step on the personalised model; W_global is read only."""
    if grad is None:
        grad = loss_and_grad(state.w_local, batch)[1]
    pull = state.lambda_ditto * (state.w_local.flat - state.w_global.flat)
    state.w_local = ModelParams(state.w_local.flat - cfg.eta_local * (grad + pull), state.w_local.layout)
    return state.w_local


def update_lambda(lam: float, acc_ref: float, acc_local: float, cfg: ClientConfig) -> float:
    lam = lam + cfg.eta_ditto * (acc_ref - acc_local - cfg.acc_thres)
    return min(cfg.lambda_max, max(cfg.lambda_min, lam))


def _eval_subset(state: ClientState, cfg: ClientConfig) -> Batch:
    ev = state.data.eval
    if cfg.eval_cap is None or len(ev) <= cfg.eval_cap:
        return ev
    return ev.subset(np.sort(state.rng.choice(len(ev), cfg.eval_cap, replace=False)))


def train_round(state: ClientState, broadcast: np.ndarray, cfg: ClientConfig, train: Batch | None = None) -> Upload:
    """Run one local round and return the decomposed upload.

    ``train`` overrides the client's own training set (data-poisoning
    adversaries pass their poisoned copy). After the upload is formed the
    client's global copy is rolled back to the received model, so every
    client keeps the same W_global as the server.
    """
    layout = state.w_global.layout
    broadcast = np.asarray(broadcast, dtype=np.float64)
    if broadcast.shape != (layout.total_params,):
        raise ValueError("broadcast length does not match the model")
    train = state.data.train if train is None else train

    state.w_global = ModelParams(state.w_global.flat + broadcast, layout)
    w_temp = state.w_global.flat.copy()
    acc_ref = evaluate(state.w_global, state.data.eval)
    eval_sub = _eval_subset(state, cfg)

    n = len(train)
    for _ in range(cfg.epochs):
        order = state.rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = train.subset(order[start:start + cfg.batch_size])
            g_global = loss_and_grad(state.w_global, batch)[1]
            state.w_global = ModelParams(state.w_global.flat - cfg.eta_global * g_global, layout)
            ditto_step(state, batch, cfg)
            acc_local = evaluate(state.w_local, eval_sub)
            state.lambda_ditto = update_lambda(state.lambda_ditto, acc_ref, acc_local, cfg)

    w = state.w_global.flat - w_temp
    state.w_global = ModelParams(w_temp, layout)
    return make_upload(w, layout)


def sync(state: ClientState, global_flat: np.ndarray) -> np.ndarray:
    """Updates accumulated at the server since this client last synced."""
    return np.asarray(global_flat) - state.w_global.flat

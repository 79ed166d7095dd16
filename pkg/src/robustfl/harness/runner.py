"""Deterministic scenario execution and per-round metrics."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .. import attacks as atk
from ..client import ClientConfig, ClientState, Upload, make_upload, new_client, sync, train_round
from ..data import Dataset, PartitionConfig, gen_synthetic, load_idx, partition_noniid
from ..model import Batch, ModelParams, evaluate, init_params, make_layout, predict
from ..mpc import RevealLog, make_backend
from ..privacy import DpConfig
from ..server import ClipperState, RoundRecord, Server, ServerConfig
from .config import Scenario, validate

CSV_HEADER = (
    "round,ma_global,ma_personalized,ba,eps_rdp,eps_moments,clip_c,"
    "n_selected,n_kept,gamma_hat,filter_tpr,filter_fpr"
)
NO_BACKDOOR = -1.0
ABORT_EXIT_FRACTION = 0.5


@dataclass
class RoundMetrics:
    round: int
    ma_global: float
    ma_personalized: float
    ba: float
    eps_rdp: float
    eps_moments: float
    clip_c: float
    n_selected: int
    n_kept: int
    gamma_hat: float
    filter_tpr: float
    filter_fpr: float


@dataclass
class RunResult:
    metrics: list[RoundMetrics]
    records: list[RoundRecord] = field(default_factory=list)
    reveal_log: RevealLog | None = None
    aborted_rounds: int = 0

    @property
    def abort_fraction(self) -> float:
        return self.aborted_rounds / len(self.metrics) if self.metrics else 0.0


def filter_metrics(kept, truth) -> tuple[float, float]:
    """(rejected adversaries / adversaries, rejected honest / honest)."""
    truth = np.asarray(truth, dtype=bool)
    rejected = np.ones(truth.size, dtype=bool)
    rejected[np.asarray(list(kept), dtype=int)] = False
    n_adv, n_hon = int(truth.sum()), int((~truth).sum())
    tpr = float(rejected[truth].sum() / n_adv) if n_adv else 1.0
    fpr = float(rejected[~truth].sum() / n_hon) if n_hon else 0.0
    return tpr, fpr


def _load_dataset(s: Scenario) -> Dataset:
    d = s.data
    if d.source == "idx":
        return load_idx(d.images, d.labels)
    per_class = math.ceil(d.per_client * s.fl.num_clients / d.classes)
    return gen_synthetic(d.classes, d.dim, per_class, d.spread, s.seed)


class _Run:
    def __init__(self, s: Scenario):
        self.s = s
        seeds = np.random.SeedSequence(s.seed).spawn(7)
        self.sel_rng, self.adv_rng, server_rng, backend_rng, init_rng, self.atk_rng = (
            np.random.default_rng(q) for q in seeds[:6]
        )
        client_seeds = seeds[6].spawn(s.fl.num_clients)

        ds = _load_dataset(s)
        self.num_classes = ds.num_classes
        parts = partition_noniid(ds, PartitionConfig(s.fl.num_clients, s.data.deg_niid, s.data.eval_fraction, s.seed))
        self.layout = make_layout(s.model.kind, ds.dim, ds.num_classes, s.model.hidden)
        init = init_params(self.layout, init_rng)
        c = s.client
        self.ccfg = ClientConfig(
            eta_local=c.eta_local, eta_global=c.eta_global, epochs=c.epochs, lambda_init=c.lambda_init,
            eta_ditto=c.eta_ditto, acc_thres=c.acc_thres, batch_size=c.batch_size,
        )
        self.clients: list[ClientState] = [
            new_client(init, parts[i], self.ccfg, np.random.default_rng(client_seeds[i])) for i in range(s.fl.num_clients)
        ]
        self.global_flat = init.flat.copy()
        self.pooled_eval = Batch.concat([p.eval for p in parts])

        self.log = RevealLog()
        backend = make_backend(s.fl.backend, backend_rng, self.log)
        self.server = Server(
            ServerConfig(s.fl.num_clients, s.fl.q, s.fl.defense, s.fl.clip),
            ClipperState(s.clip.c0, s.clip.gamma, s.clip.eta),
            DpConfig(s.dp.sigma, s.dp.delta),
            backend,
            server_rng,
        )

        a = s.attack
        self.attack = atk.AttackSpec(a.kind, a.pmr, a.pdr)
        self.active = a.kind != "none" and a.pmr > 0
        self.pool = self._adversary_pool()
        self.poisoned: dict[int, Batch] = {}
        self.trigger = atk.TriggerSpec(size=a.trigger_size)
        self.ba_set = self._backdoor_eval()
        if a.kind == "A6":
            self.edge_candidates = atk.edge_candidates(
                ds.num_classes, ds.dim, a.edge_source, a.edge_target, a.edge_count, a.edge_shift, a.edge_spread, s.seed + 1
            )

    # -- setup -------------------------------------------------------------

    def _adversary_pool(self) -> np.ndarray:
        if not self.active or self.s.attack.identities == "per-round":
            return np.zeros(0, dtype=int)
        k = atk.adversary_count(self.s.attack.pmr, self.s.fl.num_clients)
        return np.sort(self.adv_rng.choice(self.s.fl.num_clients, size=k, replace=False))

    def _backdoor_eval(self) -> Batch | None:
        a = self.s.attack
        if a.kind == "A5":
            return atk.backdoor_test_set(self.pooled_eval, self.trigger, a.target)
        if a.kind == "A6":
            held_out = atk.edge_candidates(
                self.num_classes, self.layout.num_inputs, a.edge_source, a.edge_target,
                a.edge_count, a.edge_shift, a.edge_spread, self.s.seed + 2,
            )
            return Batch(held_out.features, np.full(len(held_out), a.edge_target))
        return None

    # -- per round ---------------------------------------------------------

    def select(self) -> tuple[list[int], np.ndarray]:
        """Selected client ids and a flag per id marking this round's adversaries."""
        N, q = self.s.fl.num_clients, self.s.fl.q
        n = math.ceil(q * N - 1e-9)
        if not self.active:
            sel = np.sort(self.sel_rng.choice(N, size=n, replace=False))
            return sel.tolist(), np.zeros(n, dtype=bool)
        k = atk.adversary_count(self.s.attack.pmr, n)
        if self.s.attack.identities == "per-round":
            sel = np.sort(self.sel_rng.choice(N, size=n, replace=False))
            adv = np.zeros(n, dtype=bool)
            adv[self.sel_rng.choice(n, size=k, replace=False)] = True
            return sel.tolist(), adv
        k = min(k, self.pool.size)
        honest = np.setdiff1d(np.arange(N), self.pool)
        picked_adv = self.sel_rng.choice(self.pool, size=k, replace=False)
        picked_hon = self.sel_rng.choice(honest, size=min(n - k, honest.size), replace=False)
        sel = np.sort(np.concatenate([picked_adv, picked_hon]))
        return sel.tolist(), np.isin(sel, picked_adv)

    def _poisoned_train(self, cid: int) -> Batch | None:
        a, kind = self.s.attack, self.s.attack.kind
        train = self.clients[cid].data.train
        if kind == "A6":
            global_model = ModelParams(self.global_flat, self.layout)
            try:
                pool = atk.a6_edge_case(global_model, self.edge_candidates, a.pool_size, {a.edge_source: a.edge_target})
            except atk.EmptyPoolError:
                return None
            return atk.mix_edge_pool(train, pool, a.pdr, self.atk_rng)
        if cid not in self.poisoned:
            if kind == "A4":
                self.poisoned[cid] = atk.a4_label_flip(train, self.num_classes, a.pdr, self.atk_rng)
            elif kind == "A5":
                self.poisoned[cid] = atk.a5_backdoor(train, a.pdr, self.trigger, a.target, self.atk_rng)
        return self.poisoned.get(cid)

    def collect(self, selected: list[int], adv: np.ndarray, attacking: bool) -> list[Upload]:
        kind = self.s.attack.kind
        uploads = []
        for cid, is_adv in zip(selected, adv):
            state = self.clients[cid]
            train = self._poisoned_train(cid) if (attacking and is_adv and kind in atk.DATA_ATTACKS) else None
            uploads.append(train_round(state, sync(state, self.global_flat), self.ccfg, train))
        if attacking and kind in atk.MODEL_ATTACKS and adv.any():
            self._replace_model_uploads(uploads, adv)
        return uploads

    def _replace_model_uploads(self, uploads: list[Upload], adv: np.ndarray) -> None:
        a, kind = self.s.attack, self.s.attack.kind
        idx = np.flatnonzero(adv)
        honest_vectors = [uploads[i].direction * uploads[i].amplitude for i in idx]
        if kind == "A1":
            for i in idx:
                uploads[i] = atk.a1_random_upload(self.layout.total_params, self.layout, self.atk_rng)
        elif kind == "A2":
            crafted = atk.a2_krum_attack(
                honest_vectors, len(uploads), idx.size, a.krum_eps, a.krum_thresh, lam_max=self.server.clipper.c
            )
            for i in idx:
                uploads[i] = make_upload(crafted, self.layout)
        elif kind == "A3":
            if idx.size < 2:
                return
            for i in idx:
                uploads[i] = make_upload(atk.a3_trimmed_mean_attack(honest_vectors, self.atk_rng), self.layout)

    def metrics(self, t: int, rec: RoundRecord, adv: np.ndarray) -> RoundMetrics:
        model = ModelParams(self.global_flat, self.layout)
        ma_global = evaluate(model, self.pooled_eval)
        pool = set(self.pool.tolist())
        personal = [evaluate(c.w_local, c.data.eval) for i, c in enumerate(self.clients) if i not in pool]
        ba = NO_BACKDOOR
        if self.ba_set is not None:
            ba = float(np.mean(predict(model, self.ba_set.features) == self.ba_set.labels))
        tpr, fpr = filter_metrics(rec.kept_indices, adv)
        ledger = self.server.ledger
        return RoundMetrics(
            t, ma_global, float(np.mean(personal)), ba, ledger.eps_rdp, ledger.eps_moments,
            rec.clip_bound, rec.n, rec.n_kept, rec.gamma_hat, tpr, fpr,
        )


def run_scenario(s: Scenario) -> RunResult:
    validate(s)
    run = _Run(s)
    out = RunResult([], [], run.log)
    for t in range(1, s.fl.rounds + 1):
        attacking = run.active and t > s.fl.warmup_rounds
        selected, adv = run.select()
        if not attacking:
            adv = np.zeros_like(adv)
        uploads = run.collect(selected, adv, attacking)
        rec = run.server.aggregate(uploads)
        rec.selected = selected
        if rec.consensus:
            run.global_flat = run.global_flat + rec.broadcast
        else:
            out.aborted_rounds += 1
        out.records.append(rec)
        out.metrics.append(run.metrics(t, rec, adv))
    return out


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isinf(v):
        return "inf"
    return f"{v:.6f}"


def metrics_csv(metrics: list[RoundMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER.split(","))
    for m in metrics:
        w.writerow(_fmt(getattr(m, k)) for k in CSV_HEADER.split(","))
    return buf.getvalue()

"""Adam training of the joint objective."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .autograd import Tape, Tensor
from .data import LabeledSequence, ProcessedDataset, make_batches
from .errors import ContractError, DivergenceError
from .evaluation import MetricsReport, evaluate
from .hypergraph import build_incidence, propagation_operator
from .model import DHCN, ModelConfig, ModelParams

log = logging.getLogger(__name__)

LOG_HEADER = "epoch,mean_Lr,mean_Ls,P@10,MRR@10,P@20,MRR@20,wall_ms"


@dataclass
class TrainConfig:
    lr: float = 0.001
    l2: float = 1e-5
    batch_size: int = 100
    epochs: int = 10
    seed: int = 42
    lr_decay_every: int = 0  # epochs; 0 disables
    lr_decay_factor: float = 0.1
    patience: int = 0  # early stopping on validation P@20; 0 disables

    def __post_init__(self):
        if self.lr <= 0:
            raise ContractError("lr must be > 0")
        if self.l2 < 0:
            raise ContractError("l2 must be >= 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ContractError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], state: AdamState, lr: float, l2: float = 0.0) -> None:
    """One bias-corrected Adam update in place; ``l2 * param`` is added to each gradient first."""
    missing = [name for name, p in params.items() if p.grad is None]
    if missing:
        raise ContractError(f"no gradient for {', '.join(missing)}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, p in params.items():
        g = p.grad + l2 * p.value if l2 else p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.value)
            state.v[name] = np.zeros_like(p.value)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.value -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass
class EpochRecord:
    epoch: int
    mean_rec: float
    mean_ssl: float | None
    metrics: MetricsReport | None
    wall_ms: int

    def csv_row(self, timing: bool = True) -> str:
        """One log line; ``timing=False`` leaves wall_ms blank so reruns compare byte for byte."""
        ssl = "" if self.mean_ssl is None else repr(self.mean_ssl)
        cells = [str(self.epoch), repr(self.mean_rec), ssl]
        for k in (10, 20):
            if self.metrics is not None and k in self.metrics.ks:
                cells += [repr(self.metrics.precision[k]), repr(self.metrics.mrr[k])]
            else:
                cells += ["", ""]
        cells.append(str(self.wall_ms) if timing else "")
        return ",".join(cells)


@dataclass
class TrainResult:
    model: DHCN
    history: list[EpochRecord]


def build_model(dataset: ProcessedDataset, config: ModelConfig, seed: int,
                params: ModelParams | None = None) -> DHCN:
    if config.max_len < dataset.max_session_len:
        raise ContractError(f"max_len {config.max_len} is below the dataset's {dataset.max_session_len}")
    prop = propagation_operator(build_incidence(dataset.train_sessions, dataset.n_items))
    if params is None:
        params = ModelParams.init(dataset.n_items, config, seed=seed)
    return DHCN(params, config, prop)


def train_step(model: DHCN, batch, state: AdamState, lr: float, l2: float, corruption_seed,
               batch_index: int = 0) -> tuple[float, float | None]:
    params = model.params.named()
    model.params.zero_grad()
    with Tape() as tape:
        out = model.forward(batch, corruption_seed=corruption_seed)
    loss = out.loss.item()
    if not np.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss} at batch {batch_index}")
    tape.backward(out.loss)
    for p in params.values():
        if p.grad is None:
            # parameter disabled by an ablation; it receives no signal
            p.grad = np.zeros_like(p.value)
    adam_step(params, state, lr, l2)
    for name, p in params.items():
        if not np.all(np.isfinite(p.value)):
            raise DivergenceError(f"parameter {name} became non-finite at batch {batch_index}")
    return out.rec.item(), (None if out.ssl is None else out.ssl.item())


def train(dataset: ProcessedDataset, model_config: ModelConfig, train_config: TrainConfig,
          validation: Sequence[LabeledSequence] | None = None,
          on_epoch: Callable[[EpochRecord], None] | None = None,
          model: DHCN | None = None) -> TrainResult:
    """Mini-batch training; every random choice derives from ``train_config.seed``."""
    tc = train_config
    if model is None:
        model = build_model(dataset, model_config, tc.seed)
    state = AdamState()
    history: list[EpochRecord] = []
    best, stale = -1.0, 0
    for epoch in range(1, tc.epochs + 1):
        start = time.perf_counter()
        lr = tc.lr
        if tc.lr_decay_every:
            lr *= tc.lr_decay_factor ** ((epoch - 1) // tc.lr_decay_every)
        batches = make_batches(dataset.train, tc.batch_size, shuffle=True, seed=[tc.seed, epoch])
        rec_sum, ssl_sum, ssl_count = 0.0, 0.0, 0
        for b_idx, batch in enumerate(batches):
            rec, ssl = train_step(model, batch, state, lr, tc.l2, [tc.seed, epoch, b_idx], b_idx)
            rec_sum += rec
            if ssl is not None:
                ssl_sum += ssl
                ssl_count += 1
        metrics = evaluate(model, validation) if validation else None
        record = EpochRecord(
            epoch=epoch,
            mean_rec=rec_sum / len(batches),
            mean_ssl=(ssl_sum / ssl_count) if ssl_count else None,
            metrics=metrics,
            wall_ms=int(round(1000 * (time.perf_counter() - start))),
        )
        history.append(record)
        log.info("epoch %d: Lr=%.5f Ls=%s", epoch, record.mean_rec, record.mean_ssl)
        if on_epoch is not None:
            on_epoch(record)
        if tc.patience and metrics is not None and 20 in metrics.ks:
            if metrics.precision[20] > best:
                best, stale = metrics.precision[20], 0
            else:
                stale += 1
                if stale >= tc.patience:
                    log.info("early stop after epoch %d", epoch)
                    break
    return TrainResult(model=model, history=history)

"""Oracle checks run by ``dhcn selfcheck``.

Each check compares a library path against an independent computation:
finite differences for gradients, an explicit double sum for the
hypergraph convolution, set arithmetic for line-graph weights, and a short
overfitting run for the training loop.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import Batch, LabeledSequence
from .evaluation import evaluate
from .gradcheck import check_gradients
from .hypergraph import build_incidence, build_line_graph, hypergraph_convolve, propagation_operator
from .model import DHCN, ModelConfig, ModelParams, corruption_permutations
from .synthetic import overfit_dataset
from .training import TrainConfig, train


@dataclass
class CheckResult:
    module: str
    invariant: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.module}: {self.invariant} ({self.detail})"


def random_sessions(rng: np.random.Generator, n_items: int, n_sessions: int) -> list[list[int]]:
    out = []
    while len(out) < n_sessions:
        s = rng.integers(0, n_items, int(rng.integers(2, n_items + 2))).tolist()
        if len(set(s)) >= 2:
            out.append(s)
    return out


def double_sum_layer(sessions, n_items: int, x: np.ndarray) -> np.ndarray:
    """x_i <- sum_j sum_e H_ie H_je W_ee x_j / B_ee, divided by D_ii (unit weights)."""
    edges = [set(s) for s in sessions if len(set(s)) >= 2]
    out = np.zeros_like(x)
    for i in range(n_items):
        degree = sum(1.0 for e in edges if i in e)
        if degree == 0:
            continue
        acc = np.zeros(x.shape[1])
        for j in range(n_items):
            for e in edges:
                if i in e and j in e:
                    acc += x[j] / len(e)
        out[i] = acc / degree
    return out


def check_op_gradients(tol: float = 1e-4) -> CheckResult:
    rng = np.random.default_rng(0)

    def p(*shape):
        return Tensor(rng.uniform(-1, 1, shape), requires_grad=True)

    a, b, c = p(4, 3), p(3, 5), p(4, 5)
    w = Tensor(rng.uniform(-1, 1, (4, 5)))
    fn = lambda: ag.sum_all(ag.mul(ag.softmax_rows(ag.add(ag.tanh(ag.matmul(a, b)), ag.sigmoid(c))), w))
    worst = max(check_gradients(fn, {"a": a, "b": b, "c": c}).values())
    return CheckResult("tensor-core", "op gradients match finite differences", worst < tol, f"max rel err {worst:.2e}")


def toy_instance(seed: int = 0):
    sessions = [[0, 1, 2], [2, 3, 4], [4, 5, 1, 0]]
    config = ModelConfig(d=4, n_layers=1, beta=0.02, max_len=5)
    model = DHCN(ModelParams.init(6, config, seed=seed), config, propagation_operator(build_incidence(sessions, 6)))
    batch = Batch.from_sequences([LabeledSequence((0, 1), 2), LabeledSequence((2, 3), 4),
                                  LabeledSequence((4, 5, 1), 0)])
    return model, batch


def check_model_gradients(tol: float = 1e-4) -> CheckResult:
    model, batch = toy_instance()
    perms = corruption_permutations(len(batch), model.config.d, 7)
    errs = check_gradients(lambda: model.forward(batch, perms=perms).loss, model.params.named())
    name = max(errs, key=errs.get)
    return CheckResult("model", "joint-loss gradients match finite differences", errs[name] < tol,
                       f"max rel err {errs[name]:.2e} on {name}")


def check_convolution_oracle(instances: int = 50, tol: float = 1e-10) -> CheckResult:
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(instances):
        n_items, n_edges, d = int(rng.integers(2, 9)), int(rng.integers(1, 5)), int(rng.integers(1, 6))
        sessions = random_sessions(rng, n_items, n_edges)
        x = rng.uniform(-1, 1, (n_items, d))
        prop = propagation_operator(build_incidence(sessions, n_items))
        got = ag.sparse_matmul(prop.P, Tensor(x)).value
        worst = max(worst, float(np.abs(got - double_sum_layer(sessions, n_items, x)).max()))
    return CheckResult("hypergraph", "matrix-form layer equals explicit double sum", worst <= tol,
                       f"{instances} instances, max abs err {worst:.1e}")


def check_row_stochastic(corpora: int = 100, tol: float = 1e-9) -> CheckResult:
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(corpora):
        n_items = int(rng.integers(2, 12))
        sessions = random_sessions(rng, n_items, int(rng.integers(1, 8)))
        hg = build_incidence(sessions, n_items)
        sums = propagation_operator(hg).P.row_sums()
        positive = hg.vertex_degrees > 0
        worst = max(worst, float(np.abs(sums[positive] - 1).max()), float(np.abs(sums[~positive]).max(initial=0)))
        lg_sums = build_line_graph(sessions).normalized.row_sums()
        worst = max(worst, float(np.abs(lg_sums - 1).max()))
    return CheckResult("hypergraph", "propagation rows sum to 1", worst <= tol,
                       f"{corpora} corpora, max deviation {worst:.1e}")


def check_line_graph(batches: int = 100) -> CheckResult:
    rng = np.random.default_rng(3)
    bad = 0
    for _ in range(batches):
        sessions = [rng.integers(0, 10, int(rng.integers(1, 6))).tolist() for _ in range(int(rng.integers(1, 9)))]
        A = build_line_graph(sessions).A_hat.to_dense()
        for p, sp in enumerate(sessions):
            for q, sq in enumerate(sessions):
                want = 1.0 if p == q else len(set(sp) & set(sq)) / len(set(sp) | set(sq))
                bad += A[p, q] != want
        bad += int(not np.array_equal(A, A.T))
    return CheckResult("hypergraph", "line-graph weights equal Jaccard overlap", bad == 0,
                       f"{batches} batches, {bad} mismatches")


def check_overfit(epochs: int = 200) -> CheckResult:
    ds = overfit_dataset()
    result = train(ds, ModelConfig(d=16, n_layers=1, beta=0.01),
                   TrainConfig(lr=0.01, batch_size=100, epochs=epochs, seed=42))
    p1 = evaluate(result.model, ds.train, ks=(1,)).precision[1]
    final = result.history[-1].mean_rec
    return CheckResult("training", "overfits the 8-item toy corpus", p1 >= 0.9 and final < 0.1,
                       f"train P@1={p1:.3f}, final L_r={final:.4f}")


CHECKS: list[Callable[[], CheckResult]] = [
    check_op_gradients,
    check_model_gradients,
    check_convolution_oracle,
    check_row_stochastic,
    check_line_graph,
    check_overfit,
]


def run_all() -> list[CheckResult]:
    results = []
    for check in CHECKS:
        try:
            results.append(check())
        except Exception as exc:  # a crash is reported as a failure of that check
            results.append(CheckResult("selfcheck", check.__name__, False, f"{type(exc).__name__}: {exc}"))
    return results

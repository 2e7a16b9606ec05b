"""Toy classification with continuous-depth models, tracking accuracy
per function evaluation.

A linear layer embeds 2-d points into the model's hidden width, the
chosen dynamics flow over t in [0, 1], and a linear readout produces
two logits trained with cross-entropy.  Dynamics-field gradients come
from the adjoint solve; embed and readout gradients chain through the
terminal and initial cotangents.  Every record carries cumulative NFE
counters so accuracy-per-compute ("efficacy") can be recomputed from
raw data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from momenta_node.adjoint import (
    BackwardSolveError,
    ReconstructionDivergence,
    backward,
    loss_grad_from_h,
)
from momenta_node.dynamics import (
    HeavyBallParams,
    DynamicsSpec,
    initial_state,
    make_node_rhs,
    unpack,
)
from momenta_node.field_net import (
    FieldNet,
    LinearStateMap,
    init_field,
    params_to_vec,
    vec_to_params,
)
from momenta_node.solver import IntegratorConfig, solve_dopri45


def two_spirals(n: int = 256, turns: float = 1.0, noise: float = 0.06, seed: int = 0):
    """Two interleaved Archimedean spirals, labels 0/1, roughly unit scale."""
    rng = np.random.default_rng(seed)
    half = n // 2
    theta = rng.uniform(0.25, 1.0, size=half) ** 0.5 * (2.0 * np.pi * turns)
    radius = theta / (2.0 * np.pi * turns)
    arm = np.stack([radius * np.cos(theta), radius * np.sin(theta)], axis=1)
    pts = np.concatenate([arm, -arm])
    pts += rng.normal(scale=noise, size=pts.shape)
    labels = np.concatenate([np.zeros(half, dtype=int), np.ones(n - half, dtype=int)])
    perm = rng.permutation(n)
    return pts[perm], labels[perm]


def two_moons(n: int = 256, noise: float = 0.08, seed: int = 0):
    """Two interleaved half circles, labels 0/1."""
    rng = np.random.default_rng(seed)
    half = n // 2
    th0 = rng.uniform(0.0, np.pi, size=half)
    th1 = rng.uniform(0.0, np.pi, size=n - half)
    upper = np.stack([np.cos(th0), np.sin(th0)], axis=1)
    lower = np.stack([1.0 - np.cos(th1), 0.5 - np.sin(th1)], axis=1)
    pts = np.concatenate([upper, lower])
    pts += rng.normal(scale=noise, size=pts.shape)
    labels = np.concatenate([np.zeros(half, dtype=int), np.ones(n - half, dtype=int)])
    perm = rng.permutation(n)
    return pts[perm], labels[perm]


DATASETS = {"spirals": two_spirals, "moons": two_moons}


class TrainingDiverged(RuntimeError):
    """A solve inside the training loop failed or produced non-finite values."""


class AdamOptimizer:
    """Standard bias-corrected first-order optimizer over a flat vector.

    This is the training-loop optimizer, not the uncorrected recursion
    the continuous dynamics are derived from; the two deliberately
    coexist.
    """

    def __init__(self, n: int, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class EfficacyRecord:
    epoch: int
    train_loss: float
    test_accuracy: float
    forward_nfe: int
    backward_nfe: int
    efficacy_fwd: float
    efficacy_bwd: float


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    d: int = 6
    hidden: tuple = (32,)
    activation: str = "tanh"
    t1: float = 1.0
    rtol: float = 1e-3
    atol: float = 1e-6
    n_points: int = 256
    dataset: str = "spirals"
    # Spline-stored forward states keep the backward sweep honest when a
    # trained field is too stiff to re-integrate in reverse.
    adjoint_mode: str = "store"

    def validate(self):
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.dataset not in DATASETS:
            raise ValueError(f"unknown dataset {self.dataset!r}; expected one of: {', '.join(DATASETS)}")


@dataclass
class ClassificationRun:
    records: list
    diverged: bool
    diverged_at: int | None
    param_count: int


def _softmax_ce(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient in the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=1, keepdims=True)
    n = logits.shape[0]
    eps = 1e-300
    loss = -float(np.mean(np.log(probs[np.arange(n), labels] + eps)))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n, probs


class ODEClassifier:
    """Linear embed, one continuous-depth block, linear readout."""

    def __init__(self, spec: DynamicsSpec, cfg: TrainConfig):
        self.spec = spec
        self.d = cfg.d
        self.t1 = cfg.t1
        self.solver_cfg = IntegratorConfig(rtol=cfg.rtol, atol=cfg.atol, max_steps=40_000)
        self.adjoint_mode = cfg.adjoint_mode
        rng = np.random.default_rng(cfg.seed)
        self.field = init_field(
            spec.field_in_dim(cfg.d),
            cfg.hidden,
            spec.width(cfg.d),
            activation=cfg.activation,
            seed=cfg.seed,
        )
        w = spec.width(cfg.d)
        self.embed = LinearStateMap(
            W=rng.uniform(-1.0, 1.0, size=(cfg.d, 2)) / np.sqrt(2.0), b=np.zeros(cfg.d)
        )
        # Zero readout: the untrained model emits identical logits, so its
        # accuracy is exactly the test split's class balance.
        self.readout = LinearStateMap(W=np.zeros((2, w)), b=np.zeros(2))

    # -- flat parameter plumbing ------------------------------------
    @property
    def n_params(self) -> int:
        return (
            self.field.n_params
            + self.spec.extra_param_count
            + self.embed.W.size + self.embed.b.size
            + self.readout.W.size + self.readout.b.size
        )

    def get_params(self) -> np.ndarray:
        parts = [params_to_vec(self.field)]
        if self.spec.extra_param_count:
            parts.append(np.array([self.spec.hb.theta]))
        parts += [self.embed.W.ravel(), self.embed.b, self.readout.W.ravel(), self.readout.b]
        return np.concatenate(parts)

    def set_params(self, vec: np.ndarray) -> None:
        i = self.field.n_params
        self.field = vec_to_params(self.field, vec[:i])
        if self.spec.extra_param_count:
            self.spec = replace(self.spec, hb=HeavyBallParams(theta=float(vec[i])))
            i += 1
        for mapping in (self.embed, self.readout):
            nw, nb = mapping.W.size, mapping.b.size
            mapping.W = vec[i : i + nw].reshape(mapping.W.shape)
            i += nw
            mapping.b = vec[i : i + nb].copy()
            i += nb

    # -- forward / backward ------------------------------------------
    def forward(self, x: np.ndarray):
        """Solve the flow for a batch; returns (terminal h block, solve result)."""
        h0 = self.embed.apply(x)
        y0 = initial_state(self.spec, h0)
        rhs = make_node_rhs(self.spec, self.field, self.d, batch=x.shape[0])
        res = solve_dopri45(rhs, y0, 0.0, self.t1, self.solver_cfg,
                            sample_times=(0.0, self.t1))
        if not res.ok:
            raise TrainingDiverged(f"forward solve failed: {res.status.value}")
        terminal = unpack(res.y_final, self.spec, self.d, batch=x.shape[0])
        return terminal.h, res

    def loss_and_grad(self, x: np.ndarray, labels: np.ndarray):
        """Cross-entropy plus the full flat gradient; returns nfe counters too."""
        batch = x.shape[0]
        h0 = self.embed.apply(x)
        y0 = initial_state(self.spec, h0)
        rhs = make_node_rhs(self.spec, self.field, self.d, batch=batch)
        res = solve_dopri45(rhs, y0, 0.0, self.t1, self.solver_cfg,
                            sample_times=(0.0, self.t1))
        if not res.ok:
            raise TrainingDiverged(f"forward solve failed: {res.status.value}")
        terminal = unpack(res.y_final, self.spec, self.d, batch=batch)
        logits = self.readout.apply(terminal.h)
        loss, dlogits, _ = _softmax_ce(logits, labels)

        grad_h_T, grad_readout = self.readout.vjp(terminal.h, dlogits)
        run = backward(res, loss_grad_from_h(self.spec, grad_h_T), self.spec, self.field,
                       cfg=self.solver_cfg, mode=self.adjoint_mode)
        a_h0 = np.atleast_2d(run.grad_initial_state.h)[:, : self.d]
        grad_x_unused, grad_embed = self.embed.vjp(x, a_h0)
        grad = np.concatenate([run.grad_params, grad_embed, grad_readout])
        return loss, grad, res.nfe, run.backward_nfe

    def predict(self, x: np.ndarray):
        h_T, res = self.forward(x)
        logits = self.readout.apply(h_T)
        return np.argmax(logits, axis=1), res.nfe

    def eval_loss(self, x: np.ndarray, labels: np.ndarray):
        h_T, res = self.forward(x)
        logits = self.readout.apply(h_T)
        loss, _, _ = _softmax_ce(logits, labels)
        return loss, res.nfe


def _batches(n: int, batch_size: int, rng: np.random.Generator | None):
    idx = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch_size):
        yield idx[start : start + batch_size]


def run_classification(spec: DynamicsSpec, cfg: TrainConfig) -> ClassificationRun:
    """Train one model and emit one record per epoch (plus epoch 0).

    Record 0 is the untrained network evaluated on both splits; each
    later record reports the epoch's mean training loss and a fresh
    test evaluation.  Efficacy divides test accuracy by the epoch's
    mean forward (resp. backward) NFE per solve; epoch 0 has no
    backward solves, so its efficacy_bwd is 0 by convention.  On
    divergence (non-finite loss or a failed solve) the records so far
    are returned with the divergence epoch flagged.
    """
    cfg.validate()
    xs, ys = DATASETS[cfg.dataset](n=cfg.n_points, seed=cfg.seed)
    # Stratified 80/20 split keeps the test set class-balanced, so the
    # zero-readout baseline sits exactly at chance.
    train_sel, test_sel = [], []
    for label in np.unique(ys):
        members = np.flatnonzero(ys == label)
        cut = int(round(0.8 * len(members)))
        train_sel.append(members[:cut])
        test_sel.append(members[cut:])
    train_sel = np.concatenate(train_sel)
    test_sel = np.concatenate(test_sel)
    x_train, y_train = xs[train_sel], ys[train_sel]
    x_test, y_test = xs[test_sel], ys[test_sel]

    model = ODEClassifier(spec, cfg)
    opt = AdamOptimizer(model.n_params, lr=cfg.lr)

    fwd_total = 0
    bwd_total = 0
    records: list[EfficacyRecord] = []

    def evaluate():
        nonlocal fwd_total
        correct = 0
        solves = 0
        for sel in _batches(len(x_test), cfg.batch_size, rng=None):
            pred, nfe = model.predict(x_test[sel])
            correct += int(np.sum(pred == y_test[sel]))
            fwd_total += nfe
            solves += 1
        return correct / len(x_test), solves

    def record_epoch(epoch, train_loss, fwd_start, fwd_solves, bwd_start, bwd_solves):
        acc, eval_solves = evaluate()
        fwd_solves += eval_solves
        mean_fwd = (fwd_total - fwd_start) / fwd_solves
        eff_fwd = acc / mean_fwd
        if bwd_solves:
            mean_bwd = (bwd_total - bwd_start) / bwd_solves
            eff_bwd = acc / mean_bwd
        else:
            eff_bwd = 0.0
        records.append(
            EfficacyRecord(epoch, train_loss, acc, fwd_total, bwd_total, eff_fwd, eff_bwd)
        )

    # Divergence anywhere (a training batch or the post-epoch evaluation)
    # returns the records collected so far instead of raising.
    epoch = 0
    try:
        # Epoch 0: untrained baseline; train loss measured without updates.
        fwd_start = fwd_total
        loss0 = 0.0
        solves0 = 0
        for sel in _batches(len(x_train), cfg.batch_size, rng=None):
            loss, nfe = model.eval_loss(x_train[sel], y_train[sel])
            loss0 += loss * len(sel)
            fwd_total += nfe
            solves0 += 1
        record_epoch(0, loss0 / len(x_train), fwd_start, solves0, bwd_total, 0)

        for epoch in range(1, cfg.epochs + 1):
            rng = np.random.default_rng((cfg.seed, epoch))
            fwd_start = fwd_total
            bwd_start = bwd_total
            epoch_loss = 0.0
            n_seen = 0
            solves = 0
            for sel in _batches(len(x_train), cfg.batch_size, rng):
                loss, grad, nfe_f, nfe_b = model.loss_and_grad(x_train[sel], y_train[sel])
                if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                    raise TrainingDiverged("non-finite loss or gradient")
                fwd_total += nfe_f
                bwd_total += nfe_b
                solves += 1
                epoch_loss += loss * len(sel)
                n_seen += len(sel)
                model.set_params(opt.step(model.get_params(), grad))
            record_epoch(epoch, epoch_loss / n_seen, fwd_start, solves, bwd_start, solves)
    except (TrainingDiverged, BackwardSolveError, ReconstructionDivergence, FloatingPointError):
        return ClassificationRun(records, diverged=True, diverged_at=epoch,
                                 param_count=model.n_params)

    return ClassificationRun(records, diverged=False, diverged_at=None,
                             param_count=model.n_params)

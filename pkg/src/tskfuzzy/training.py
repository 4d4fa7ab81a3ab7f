"""Gradient training of every model parameter with Adam and early stopping.

The objective is mean binary cross-entropy plus ``l2 * ||theta||^2``. The
gradient is derived by hand through the log-space forward pass; widths are
optimized as log-widths and re-floored after every step.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .core import DENOM_EPS, LOG_SIGMA_FLOOR, TskModel, standardized_pass
from .data import Dataset, stratified_split
from .errors import EmptyBatch, InvalidConfig, NonFiniteLoss, ShapeMismatch, SingleClass

P_EPS = 1e-7
L2_ALL = "all"
L2_CONSEQUENTS = "consequents"
_EVAL_CHUNK = 4096


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.005
    l2: float = 1e-4
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 10
    min_delta: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.1
    l2_scope: str = L2_ALL

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidConfig("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise InvalidConfig("Adam betas must lie in [0, 1)")
        if self.patience < 1:
            raise InvalidConfig("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise InvalidConfig("batch size and max epochs must be >= 1")
        if not 0 < self.validation_fraction < 1:
            raise InvalidConfig("validation fraction must lie in (0, 1)")
        if self.l2 < 0:
            raise InvalidConfig("l2 coefficient must be non-negative")
        if self.l2_scope not in (L2_ALL, L2_CONSEQUENTS):
            raise InvalidConfig(f"unknown l2 scope {self.l2_scope!r}")


class ParamLayout:
    """Stable map between a model and its flat parameter vector.

    Order: MF centers, MF log-widths, rule biases, rule weights (row-major).
    """

    def __init__(self, model: TskModel):
        self.n_mfs = len(model.centers)
        self.n_rules = model.n_rules
        self.n_features = model.n_features
        self.mf_offsets = model.mf_offsets
        M, m, n = self.n_mfs, self.n_rules, self.n_features
        self.centers = slice(0, M)
        self.log_widths = slice(M, 2 * M)
        self.biases = slice(2 * M, 2 * M + m)
        self.weights = slice(2 * M + m, 2 * M + m + m * n)
        self.size = 2 * M + m * (n + 1)

    def center_slot(self, feature: int, mf: int) -> int:
        return int(self.mf_offsets[feature]) + mf

    def log_width_slot(self, feature: int, mf: int) -> int:
        return self.n_mfs + self.center_slot(feature, mf)

    def bias_slot(self, rule: int) -> int:
        return 2 * self.n_mfs + rule

    def weight_slot(self, rule: int, feature: int) -> int:
        return self.weights.start + rule * self.n_features + feature

    def consequent_mask(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        mask[self.biases.start:] = True
        return mask


def flatten(model: TskModel) -> np.ndarray:
    return np.concatenate([model.centers, model.log_widths, model.biases, model.weights.ravel()])


def unflatten(model: TskModel, theta: np.ndarray) -> TskModel:
    lay = ParamLayout(model)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (lay.size,):
        raise ShapeMismatch(f"parameter vector has shape {theta.shape}, expected ({lay.size},)")
    return model.evolve(
        centers=theta[lay.centers].copy(),
        log_widths=theta[lay.log_widths].copy(),
        biases=theta[lay.biases].copy(),
        weights=theta[lay.weights].reshape(lay.n_rules, lay.n_features).copy(),
    )


class LossValue(NamedTuple):
    total: float
    bce: float
    l2: float


def _l2_vector(model: TskModel, scope: str) -> np.ndarray:
    theta = flatten(model)
    if scope == L2_CONSEQUENTS:
        theta = theta[ParamLayout(model).consequent_mask()]
    return theta


def _bce(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    q = np.clip(p, P_EPS, 1.0 - P_EPS)
    return -(y * np.log(q) + (1.0 - y) * np.log(1.0 - q))


def _check_batch(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] == 0:
        raise EmptyBatch("loss needs at least one sample")
    if X.shape[0] != len(y):
        raise ShapeMismatch("batch features and labels differ in length")
    return X, y


def loss(model: TskModel, X_batch, y_batch, l2: float, l2_scope: str = L2_ALL) -> LossValue:
    """Objective on standardized inputs: (total, bce, l2 term)."""
    X, y = _check_batch(X_batch, y_batch)
    bce = 0.0
    for lo in range(0, X.shape[0], _EVAL_CHUNK):
        p = standardized_pass(model, X[lo:lo + _EVAL_CHUNK])["p"]
        bce += float(np.sum(_bce(p, y[lo:lo + _EVAL_CHUNK])))
    bce /= X.shape[0]
    theta = _l2_vector(model, l2_scope)
    reg = l2 * float(np.dot(theta, theta))
    return LossValue(bce + reg, bce, reg)


def loss_and_gradient(model: TskModel, X_batch, y_batch, l2: float, l2_scope: str = L2_ALL):
    """Loss and its exact gradient w.r.t. the flat parameter vector."""
    X, y = _check_batch(X_batch, y_batch)
    N = X.shape[0]
    fw = standardized_pass(model, X)
    p, a, f, yr, denom = fw["p"], fw["a"], fw["f"], fw["y"], fw["denom"]
    bce = float(np.mean(_bce(p, y)))

    # clamped probabilities contribute no gradient
    live = (p >= P_EPS) & (p <= 1.0 - P_EPS)
    g = np.where(live, p - y, 0.0) / N

    lay = ParamLayout(model)
    grad = np.zeros(lay.size)
    r = a / denom[:, None]
    g_f = g[:, None] * r
    grad[lay.biases] = g_f.sum(axis=0)
    grad[lay.weights] = np.sum(g_f[:, :, None] * X[:, None, :], axis=0).ravel()

    dy_dz = r * (f - yr[:, None])
    # the max-shift couples to the denominator eps through the argmax rule
    top = np.argmax(fw["z"], axis=1)
    dy_dz[np.arange(N), top] -= yr * DENOM_EPS / denom
    g_z = g[:, None] * dy_dz

    G = model.rule_mf_index()
    C = model.centers[G]
    S2 = model.widths[G] ** 2
    d = X[:, None, :] - C[None, :, :]
    dc = np.sum(g_z[:, :, None] * d, axis=0) / S2
    ds = np.sum(g_z[:, :, None] * d * d, axis=0) / S2
    ds = ds * (model.log_widths[G] >= LOG_SIGMA_FLOOR)
    M = lay.n_mfs
    grad[lay.centers] = np.bincount(G.ravel(), weights=dc.ravel(), minlength=M)
    grad[lay.log_widths] = np.bincount(G.ravel(), weights=ds.ravel(), minlength=M)

    theta = flatten(model)
    if l2_scope == L2_CONSEQUENTS:
        mask = lay.consequent_mask()
        reg = l2 * float(np.dot(theta[mask], theta[mask]))
        grad[mask] += 2.0 * l2 * theta[mask]
    else:
        reg = l2 * float(np.dot(theta, theta))
        grad += 2.0 * l2 * theta
    return LossValue(bce + reg, bce, reg), grad


def gradient(model: TskModel, X_batch, y_batch, l2: float, l2_scope: str = L2_ALL) -> np.ndarray:
    return loss_and_gradient(model, X_batch, y_batch, l2, l2_scope)[1]


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(state: AdamState, params, grad, cfg: TrainConfig):
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if not (params.shape == grad.shape == state.m.shape == state.v.shape):
        raise ShapeMismatch("Adam state, parameters and gradient must share a shape")
    t = state.t + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad * grad
    m_hat = m / (1.0 - cfg.beta1 ** t)
    v_hat = v / (1.0 - cfg.beta2 ** t)
    new_params = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return AdamState(m, v, t), new_params


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    @property
    def n_epochs(self) -> int:
        return len(self.train_loss)

    def epochs_to_reach(self, target_val_loss: float) -> int | None:
        """First 1-based epoch whose validation loss is <= target, else None."""
        for e, v in enumerate(self.val_loss, start=1):
            if v <= target_val_loss:
                return e
        return None


def _accuracy(model: TskModel, X, y) -> float:
    correct = 0
    for lo in range(0, X.shape[0], _EVAL_CHUNK):
        p = standardized_pass(model, X[lo:lo + _EVAL_CHUNK])["p"]
        correct += int(np.sum((p >= 0.5) == (y[lo:lo + _EVAL_CHUNK] == 1)))
    return correct / X.shape[0]


def _floor_widths(theta: np.ndarray, lay: ParamLayout) -> None:
    np.maximum(theta[lay.log_widths], LOG_SIGMA_FLOOR, out=theta[lay.log_widths])


def train(model: TskModel, ds_train_std: Dataset, cfg: TrainConfig = TrainConfig(), log=None):
    """Fit on standardized data; returns the best-validation-epoch model and a report."""
    y_all = np.asarray(ds_train_std.y)
    if len(np.unique(y_all)) < 2:
        raise SingleClass("training data contains a single class")
    split_seed, shuffle_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    split = stratified_split(y_all, cfg.validation_fraction, int(split_seed.generate_state(1)[0]))
    X_tr, y_tr = ds_train_std.X[split.train], y_all[split.train].astype(np.float64)
    X_va, y_va = ds_train_std.X[split.test], y_all[split.test].astype(np.float64)
    rng = np.random.default_rng(shuffle_seed)

    lay = ParamLayout(model)
    theta = flatten(model)
    _floor_widths(theta, lay)
    state = AdamState.zeros(lay.size)
    report = TrainReport()
    best_theta, best_val, ref_val, wait = theta.copy(), math.inf, math.inf, 0

    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(len(y_tr))
        for b, lo in enumerate(range(0, len(perm), cfg.batch_size)):
            idx = perm[lo:lo + cfg.batch_size]
            current = unflatten(model, theta)
            lv, grad = loss_and_gradient(current, X_tr[idx], y_tr[idx], cfg.l2, cfg.l2_scope)
            if not (math.isfinite(lv.total) and np.all(np.isfinite(grad))):
                raise NonFiniteLoss(epoch, b)
            state, theta = adam_step(state, theta, grad, cfg)
            _floor_widths(theta, lay)
        current = unflatten(model, theta)
        tr = loss(current, X_tr, y_tr, cfg.l2, cfg.l2_scope).total
        va = loss(current, X_va, y_va, cfg.l2, cfg.l2_scope).total
        if not (math.isfinite(tr) and math.isfinite(va)):
            raise NonFiniteLoss(epoch, -1)
        report.train_loss.append(tr)
        report.val_loss.append(va)
        report.train_acc.append(_accuracy(current, X_tr, y_tr))
        report.val_acc.append(_accuracy(current, X_va, y_va))
        report.epoch_seconds.append(time.perf_counter() - t0)
        if log is not None:
            log(f"epoch {epoch}: train_loss={tr:.6f} val_loss={va:.6f} "
                f"train_acc={report.train_acc[-1]:.4f} val_acc={report.val_acc[-1]:.4f}")

        if va < best_val:
            best_val, best_theta, report.best_epoch = va, theta.copy(), epoch
        # patience only resets on an improvement larger than min_delta; the first epoch always counts
        if epoch == 1 or va < ref_val - cfg.min_delta:
            ref_val, wait = va, 0
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    report.stopped_epoch = report.n_epochs
    return unflatten(model, best_theta), report


CURVE_COLUMNS = ("epoch", "train_loss", "val_loss", "train_acc", "val_acc")


def export_curves(report: TrainReport, path) -> None:
    if report.n_epochs == 0:
        raise ValueError("cannot export an empty training report")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for e in range(report.n_epochs):
            w.writerow([e + 1] + [repr(float(v)) for v in (
                report.train_loss[e], report.val_loss[e], report.train_acc[e], report.val_acc[e])])


def read_curves(path) -> dict[str, list[float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    out = {c: [] for c in CURVE_COLUMNS}
    for row in rows:
        out["epoch"].append(int(row["epoch"]))
        for c in CURVE_COLUMNS[1:]:
            out[c].append(float(row[c]))
    return out

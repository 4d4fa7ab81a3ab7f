"""First-order TSK inference: Gaussian fuzzification, product firing,
affine consequents, normalized weighted average and a sigmoid output.

Firing strengths are formed in log space. With dozens of features the raw
product of memberships underflows, so each sample's log-strengths are shifted
by their maximum before exponentiating; the weighted average is invariant to
that common factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .data import CONTINUOUS, StandardizationStats, apply_standardizer
from .errors import DimensionMismatch, InvalidConfig

SIGMA_FLOOR = 1e-3
DENOM_EPS = 1e-12
LOG_SIGMA_FLOOR = math.log(SIGMA_FLOOR)
DEFAULT_THRESHOLD = 0.5
_CHUNK = 4096


@dataclass(frozen=True)
class MembershipFunction:
    center: float
    width: float

    @property
    def log_width(self) -> float:
        return math.log(self.width)


@dataclass(frozen=True)
class Rule:
    antecedent: tuple[int, ...]
    weights: np.ndarray
    bias: float


@dataclass(frozen=True)
class ForwardTrace:
    memberships: list[np.ndarray]
    firing: np.ndarray
    normalized_firing: np.ndarray
    consequents: np.ndarray
    raw_output: float
    probability: float
    # log-space shift applied to ``firing``; true strengths are firing * exp(log_shift)
    log_shift: float = 0.0


def membership(mf: MembershipFunction, x: float) -> float:
    sigma = max(mf.width, SIGMA_FLOOR)
    return math.exp(-((x - mf.center) ** 2) / (2.0 * sigma * sigma))


def firing_strength(antecedent: Sequence[int], memberships: Sequence[Sequence[float]]) -> float:
    """Product t-norm over the selected memberships, accumulated as a sum of logs."""
    log_alpha = 0.0
    for i, j in enumerate(antecedent):
        mu = memberships[i][j]
        if mu <= 0.0:
            return 0.0
        log_alpha += math.log(mu)
    return math.exp(log_alpha)


def consequent(rule: Rule, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != rule.weights.shape:
        raise DimensionMismatch(f"rule has {len(rule.weights)} weights, input has {x.size} values")
    return float(rule.bias + float(np.sum(rule.weights * x)))


def sigmoid(y):
    y = np.asarray(y, dtype=np.float64)
    out = np.empty_like(y)
    pos = y >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-y[pos]))
    e = np.exp(y[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass(frozen=True)
class TskModel:
    """A trained or freshly initialized TSK classifier.

    MF parameters live in flat arrays indexed through ``mf_offsets``: the MFs of
    feature ``i`` occupy ``mf_offsets[i]:mf_offsets[i+1]``. Every rule selects one
    MF per feature from these shared banks. Widths are stored as logs.
    """

    feature_names: tuple[str, ...]
    kinds: tuple[str, ...]
    centers: np.ndarray
    log_widths: np.ndarray
    mf_offsets: np.ndarray
    antecedents: np.ndarray
    weights: np.ndarray
    biases: np.ndarray
    standardizer: StandardizationStats
    threshold: float = DEFAULT_THRESHOLD
    init_centers: np.ndarray | None = None
    init_log_widths: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        n, m = self.n_features, self.n_rules
        if m < 1:
            raise InvalidConfig("a model needs at least one rule")
        if len(self.kinds) != n or len(self.mf_offsets) != n + 1:
            raise DimensionMismatch("feature metadata does not match feature count")
        if self.antecedents.shape != (m, n) or self.weights.shape != (m, n):
            raise DimensionMismatch("rule arrays must have shape (n_rules, n_features)")
        counts = np.diff(self.mf_offsets)
        if np.any(counts < 1):
            raise InvalidConfig("every feature needs at least one membership function")
        if np.any(self.antecedents < 0) or np.any(self.antecedents >= counts[None, :]):
            raise InvalidConfig("antecedent index out of range for its feature bank")
        if self.centers.shape != (self.mf_offsets[-1],) or self.log_widths.shape != self.centers.shape:
            raise DimensionMismatch("MF parameter arrays do not match the bank layout")
        if self.standardizer.dim != n:
            raise DimensionMismatch("standardizer dimension does not match feature count")
        if not 0.0 < self.threshold < 1.0:
            raise InvalidConfig(f"threshold must lie in (0, 1), got {self.threshold}")

    @classmethod
    def from_parts(
        cls,
        feature_names: Sequence[str],
        mf_bank: Sequence[Sequence[MembershipFunction]],
        rules: Sequence[Rule],
        standardizer: StandardizationStats | None = None,
        kinds: Sequence[str] | None = None,
        threshold: float = DEFAULT_THRESHOLD,
    ) -> "TskModel":
        n = len(feature_names)
        if len(mf_bank) != n:
            raise DimensionMismatch("one MF bank per feature required")
        offsets = np.concatenate([[0], np.cumsum([len(b) for b in mf_bank])]).astype(np.int64)
        centers = np.array([mf.center for bank in mf_bank for mf in bank], dtype=np.float64)
        log_widths = np.array([mf.log_width for bank in mf_bank for mf in bank], dtype=np.float64)
        for r in rules:
            if len(r.antecedent) != n or len(r.weights) != n:
                raise DimensionMismatch("rule length does not match feature count")
        return cls(
            feature_names=tuple(feature_names),
            kinds=tuple(kinds) if kinds is not None else (CONTINUOUS,) * n,
            centers=centers,
            log_widths=log_widths,
            mf_offsets=offsets,
            antecedents=np.array([r.antecedent for r in rules], dtype=np.int64).reshape(len(rules), n),
            weights=np.array([r.weights for r in rules], dtype=np.float64).reshape(len(rules), n),
            biases=np.array([r.bias for r in rules], dtype=np.float64),
            standardizer=standardizer or StandardizationStats.identity(n),
            threshold=threshold,
        )

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def n_rules(self) -> int:
        return len(self.biases)

    @property
    def mf_counts(self) -> np.ndarray:
        return np.diff(self.mf_offsets)

    @property
    def widths(self) -> np.ndarray:
        return np.exp(np.maximum(self.log_widths, LOG_SIGMA_FLOOR))

    @property
    def mf_bank(self) -> list[list[MembershipFunction]]:
        w = self.widths
        return [
            [MembershipFunction(float(self.centers[g]), float(w[g])) for g in range(a, b)]
            for a, b in zip(self.mf_offsets[:-1], self.mf_offsets[1:])
        ]

    @property
    def rules(self) -> list[Rule]:
        return [
            Rule(tuple(int(j) for j in self.antecedents[k]), self.weights[k].copy(), float(self.biases[k]))
            for k in range(self.n_rules)
        ]

    def rule_mf_index(self) -> np.ndarray:
        """Flat MF index used by rule k for feature i, shape (m, n)."""
        return self.antecedents + self.mf_offsets[:-1][None, :]

    def n_parameters(self) -> int:
        return 2 * len(self.centers) + self.n_rules * (self.n_features + 1)

    def evolve(self, **changes) -> "TskModel":
        return replace(self, **changes)


def _log_firing(model: TskModel, Xs: np.ndarray) -> np.ndarray:
    G = model.rule_mf_index()
    c = model.centers[G]
    s = model.widths[G]
    d = Xs[:, None, :] - c[None, :, :]
    return -np.sum(d * d / (2.0 * s * s)[None, :, :], axis=2)


def standardized_pass(model: TskModel, Xs: np.ndarray) -> dict:
    """Vectorized forward on already-standardized inputs.

    Returns the intermediates the gradient needs: log firing ``z`` (N, m), the
    shifted strengths ``a`` and their ``shift``, the denominator, consequents
    ``f`` (N, m), raw output ``y`` and probability ``p``.
    """
    z = _log_firing(model, Xs)
    shift = z.max(axis=1)
    a = np.exp(z - shift[:, None])
    denom = a.sum(axis=1) + DENOM_EPS
    f = model.biases[None, :] + np.sum(Xs[:, None, :] * model.weights[None, :, :], axis=2)
    y = np.sum(a * f, axis=1) / denom
    return {"z": z, "shift": shift, "a": a, "denom": denom, "f": f, "y": y, "p": sigmoid(y)}


def _check_columns(model: TskModel, X: np.ndarray) -> None:
    if X.shape[-1] != model.n_features:
        raise DimensionMismatch(f"model expects {model.n_features} features, got {X.shape[-1]}")


def predict_proba_std(model: TskModel, Xs) -> np.ndarray:
    Xs = np.atleast_2d(np.asarray(Xs, dtype=np.float64))
    _check_columns(model, Xs)
    out = np.empty(Xs.shape[0])
    for lo in range(0, Xs.shape[0], _CHUNK):
        out[lo:lo + _CHUNK] = standardized_pass(model, Xs[lo:lo + _CHUNK])["p"]
    return out


def predict_proba(model: TskModel, X_raw) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X_raw, dtype=np.float64))
    _check_columns(model, X)
    return predict_proba_std(model, apply_standardizer(X, model.standardizer))


def forward_batch(model: TskModel, X_raw) -> list[ForwardTrace]:
    X = np.atleast_2d(np.asarray(X_raw, dtype=np.float64))
    _check_columns(model, X)
    Xs = apply_standardizer(X, model.standardizer)
    w = model.widths
    traces = []
    for lo in range(0, Xs.shape[0], _CHUNK):
        chunk = Xs[lo:lo + _CHUNK]
        out = standardized_pass(model, chunk)
        for r in range(chunk.shape[0]):
            mus = []
            for i in range(model.n_features):
                a, b = model.mf_offsets[i], model.mf_offsets[i + 1]
                d = chunk[r, i] - model.centers[a:b]
                mus.append(np.exp(-(d * d) / (2.0 * w[a:b] * w[a:b])))
            alpha = out["a"][r]
            traces.append(
                ForwardTrace(
                    memberships=mus,
                    firing=alpha.copy(),
                    normalized_firing=alpha / alpha.sum(),
                    consequents=out["f"][r].copy(),
                    raw_output=float(out["y"][r]),
                    probability=float(out["p"][r]),
                    log_shift=float(out["shift"][r]),
                )
            )
    return traces


def forward(model: TskModel, x_raw) -> ForwardTrace:
    x = np.asarray(x_raw, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("forward takes a single sample; use forward_batch for matrices")
    return forward_batch(model, x[None, :])[0]


def predict(model: TskModel, x_raw, threshold: float | None = None):
    """Label 1 iff p >= threshold; accepts one sample or a matrix."""
    t = model.threshold if threshold is None else threshold
    x = np.asarray(x_raw, dtype=np.float64)
    p = predict_proba(model, x)
    labels = (p >= t).astype(np.int64)
    return int(labels[0]) if x.ndim == 1 else labels

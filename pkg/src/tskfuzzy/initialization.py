"""Warm-start construction of a TskModel from standardized training data.

Continuous features get one Gaussian per k-means cluster of that feature's
values; binary features get a tight Gaussian at each observed value. Rule
antecedents come from a joint k-means over whole rows: each joint cluster
becomes a rule that picks, per feature, the MF nearest to the cluster center.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import SIGMA_FLOOR, MembershipFunction, Rule, TskModel
from .data import BINARY, Dataset, StandardizationStats
from .errors import EmptyCluster, InvalidConfig, InvalidRange, TooFewPoints, TooManyValues

KMEANS = "kmeans"
RANDOM = "random"


@dataclass(frozen=True)
class KMeansResult:
    centers: np.ndarray
    assignments: np.ndarray
    inertia: float
    n_iter: int = 0
    history: tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class InitConfig:
    mfs_per_feature: int = 3
    n_rules: int = 10
    consequent_range: tuple[float, float] = (-1.0, 1.0)
    seed: int = 0
    kmeans_iters: int = 100
    kmeans_restarts: int = 5
    binary_sigma: float = 0.1
    mf_init: str = KMEANS

    def __post_init__(self):
        if self.mfs_per_feature < 1:
            raise InvalidConfig(f"mfs_per_feature must be >= 1, got {self.mfs_per_feature}")
        if self.n_rules < 1:
            raise InvalidConfig(f"n_rules must be >= 1, got {self.n_rules}")
        lo, hi = self.consequent_range
        if not lo < hi:
            raise InvalidRange(f"consequent range ({lo}, {hi}) is empty")
        if self.kmeans_iters < 1 or self.kmeans_restarts < 1:
            raise InvalidConfig("k-means iterations and restarts must be >= 1")
        if self.binary_sigma <= 0:
            raise InvalidConfig("binary_sigma must be positive")
        if self.mf_init not in (KMEANS, RANDOM):
            raise InvalidConfig(f"unknown mf_init {self.mf_init!r}")


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    out = np.empty((points.shape[0], centers.shape[0]))
    for c in range(centers.shape[0]):
        out[:, c] = np.sum((points - centers[c]) ** 2, axis=1)
    return out


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    closest = np.sum((points - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers[i] = points[idx]
        closest = np.minimum(closest, np.sum((points - centers[i]) ** 2, axis=1))
    return centers


def _repair_empty(points, centers, labels, k):
    counts = np.bincount(labels, minlength=k)
    while np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        dist = np.sum((points - centers[labels]) ** 2, axis=1)
        dist[counts[labels] <= 1] = -1.0
        victim = int(np.argmax(dist))
        counts[labels[victim]] -= 1
        labels[victim] = empty
        counts[empty] = 1
        centers[empty] = points[victim]
    return labels


def _lloyd(points, k, rng, max_iters, init=None):
    centers = kmeans_plus_plus(points, k, rng) if init is None else np.array(init, dtype=np.float64)
    labels = None
    history = []
    it = 0
    for it in range(1, max_iters + 1):
        new_labels = np.argmin(_sq_dists(points, centers), axis=1)
        new_labels = _repair_empty(points, centers, new_labels, k)
        converged = labels is not None and np.array_equal(new_labels, labels)
        labels = new_labels
        centers = np.array([points[labels == c].mean(axis=0) for c in range(k)])
        history.append(float(np.sum((points - centers[labels]) ** 2)))
        if converged:
            break
    return centers, labels, history, it


def kmeans(points, k: int, seed=0, max_iters: int = 100, n_init: int = 5) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding, best of ``n_init`` restarts.

    Distance ties go to the lower cluster index; a cluster left empty takes the
    point farthest from its own center.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    if k < 1:
        raise InvalidConfig(f"k must be >= 1, got {k}")
    if points.shape[0] < k:
        raise TooFewPoints(f"{points.shape[0]} points cannot form {k} clusters")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers, labels, history, it = _lloyd(points, k, rng, max_iters)
        if best is None or history[-1] < best.inertia:
            best = KMeansResult(centers, labels, history[-1], it, tuple(history))
    return best


EXACT_1D_LIMIT = 2048
_DP_CHUNK = 256


def _contiguous_dp_centers(values: np.ndarray, k: int) -> np.ndarray | None:
    """Centers of the least-squares partition of sorted 1-D data into k runs.

    Distinct values are weighted by multiplicity; beyond EXACT_1D_LIMIT of them
    the DP runs over that many equal-count groups, so the result is exact only
    below the limit.
    """
    uniq, counts = np.unique(values, return_counts=True)
    if len(uniq) < k:
        return None
    shift = values.mean()
    wsum = counts.astype(np.float64)
    vsum = (uniq - shift) * counts
    if len(uniq) > EXACT_1D_LIMIT:
        edges = np.linspace(0, len(uniq), EXACT_1D_LIMIT + 1).round().astype(np.intp)
        wsum = np.add.reduceat(wsum, edges[:-1])
        vsum = np.add.reduceat(vsum, edges[:-1])
    u = len(wsum)
    means = vsum / wsum
    W = np.concatenate([[0.0], np.cumsum(wsum)])
    S1 = np.concatenate([[0.0], np.cumsum(vsum)])
    S2 = np.concatenate([[0.0], np.cumsum(means * vsum)])

    def cost(lo, hi):  # groups lo..hi-1, broadcast over arrays
        w = W[hi] - W[lo]
        s = S1[hi] - S1[lo]
        return np.maximum(S2[hi] - S2[lo] - s * s / w, 0.0)

    # best[j][i]: cost of splitting the first i groups into j+1 runs
    best = np.full((k, u + 1), np.inf)
    cut = np.zeros((k, u + 1), dtype=np.intp)
    best[0, 1:] = cost(np.zeros(u, dtype=np.intp), np.arange(1, u + 1))
    idx = np.arange(u + 1)
    for j in range(1, k):
        for lo in range(j + 1, u + 1, _DP_CHUNK):
            hi_i = idx[lo:min(lo + _DP_CHUNK, u + 1)]
            starts = idx[j:u]
            valid = starts[None, :] < hi_i[:, None]
            with np.errstate(invalid="ignore", divide="ignore"):
                total = best[j - 1, starts][None, :] + cost(starts[None, :], np.maximum(hi_i[:, None], starts[None, :] + 1))
            total = np.where(valid, total, np.inf)
            arg = np.argmin(total, axis=1)
            best[j, hi_i] = total[np.arange(len(hi_i)), arg]
            cut[j, hi_i] = starts[arg]
    bounds = [u]
    for j in range(k - 1, 0, -1):
        bounds.append(int(cut[j, bounds[-1]]))
    bounds.append(0)
    bounds.reverse()
    return np.array([shift + (S1[b] - S1[a]) / (W[b] - W[a]) for a, b in zip(bounds[:-1], bounds[1:])])


def kmeans_1d(values, k: int, seed=0, max_iters: int = 100, n_init: int = 5) -> KMeansResult:
    """1-D k-means; centers (and the labels pointing at them) are returned ascending.

    The k-means++ restarts are joined by one Lloyd run started from the
    contiguous least-squares partition, which makes the result the global
    optimum for up to EXACT_1D_LIMIT distinct values.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    points = values[:, None]
    res = kmeans(points, k, seed, max_iters, n_init)
    init = _contiguous_dp_centers(values, k)
    if init is not None:
        centers, labels, history, it = _lloyd(points, k, None, max_iters, init[:, None])
        if history[-1] < res.inertia:
            res = KMeansResult(centers, labels, history[-1], it, tuple(history))
    order = np.argsort(res.centers[:, 0], kind="stable")
    relabel = np.empty(k, dtype=np.intp)
    relabel[order] = np.arange(k)
    return KMeansResult(res.centers[order, 0], relabel[res.assignments], res.inertia, res.n_iter, res.history)


def mf_from_cluster(values, result: KMeansResult, cluster: int) -> MembershipFunction:
    values = np.asarray(values, dtype=np.float64).ravel()
    members = values[result.assignments == cluster]
    if members.size == 0:
        raise EmptyCluster(f"cluster {cluster} has no members")
    return MembershipFunction(float(members.mean()), max(float(members.std()), SIGMA_FLOOR))


def binary_mfs(observed_values, binary_sigma: float = 0.1) -> list[MembershipFunction]:
    vals = sorted(set(float(v) for v in observed_values))
    if len(vals) > 2:
        raise TooManyValues(f"binary feature has {len(vals)} distinct values")
    if not vals:
        raise TooFewPoints("binary feature has no observed values")
    return [MembershipFunction(v, binary_sigma) for v in vals]


def _random_mfs(values, k, rng) -> list[MembershipFunction]:
    """Centers at k randomly chosen observed values; widths from the same spread rule as k-means."""
    uniq = np.unique(values)
    centers = np.sort(rng.choice(uniq, size=k, replace=len(uniq) < k))
    labels = np.argmin(np.abs(values[:, None] - centers[None, :]), axis=1)
    mfs = []
    for c in range(k):
        members = values[labels == c]
        spread = float(members.std()) if members.size else float(values.std())
        mfs.append(MembershipFunction(float(centers[c]), max(spread, SIGMA_FLOOR)))
    return mfs


def assign_rule_antecedents(X_train_std, mf_bank, n_rules: int, seed=0, max_iters: int = 100,
                            n_init: int = 5) -> np.ndarray:
    """One antecedent vector per joint k-means cluster of the training rows.

    A duplicate vector is made distinct by moving the feature whose nearest and
    second-nearest MFs are closest in distance onto its second-nearest MF.
    """
    X = np.asarray(X_train_std, dtype=np.float64)
    res = kmeans(X, n_rules, seed, max_iters, n_init)
    n = X.shape[1]
    antecedents = np.zeros((n_rules, n), dtype=np.int64)
    gaps = np.full((n_rules, n), np.inf)
    seconds = np.zeros((n_rules, n), dtype=np.int64)
    for i in range(n):
        mf_centers = np.array([mf.center for mf in mf_bank[i]])
        dist = np.abs(res.centers[:, i][:, None] - mf_centers[None, :])
        order = np.argsort(dist, axis=1, kind="stable")
        antecedents[:, i] = order[:, 0]
        if len(mf_centers) > 1:
            rows = np.arange(n_rules)
            seconds[:, i] = order[:, 1]
            gaps[:, i] = dist[rows, order[:, 1]] - dist[rows, order[:, 0]]
    seen = set()
    for k in range(n_rules):
        key = tuple(antecedents[k])
        if key in seen:
            for i in np.argsort(gaps[k], kind="stable"):
                if not np.isfinite(gaps[k, i]):
                    break
                cand = antecedents[k].copy()
                cand[i] = seconds[k, i]
                if tuple(cand) not in seen:
                    antecedents[k] = cand
                    key = tuple(cand)
                    break
        seen.add(key)
    return antecedents


def init_consequents(n_rules: int, n_features: int, value_range=(-1.0, 1.0), seed=0):
    lo, hi = value_range
    if not lo < hi:
        raise InvalidRange(f"consequent range ({lo}, {hi}) is empty")
    rng = np.random.default_rng(seed)
    weights = rng.uniform(lo, hi, size=(n_rules, n_features))
    biases = rng.uniform(lo, hi, size=n_rules)
    return weights, biases


def _seed_sequence(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def build_mf_bank(ds_train: Dataset, cfg: InitConfig, seed) -> list[list[MembershipFunction]]:
    seeds = _seed_sequence(seed).spawn(ds_train.n_features)
    bank = []
    for j, kind in enumerate(ds_train.kinds):
        col = ds_train.X[:, j]
        if kind == BINARY:
            bank.append(binary_mfs(np.unique(col), cfg.binary_sigma))
        elif cfg.mf_init == RANDOM:
            bank.append(_random_mfs(col, cfg.mfs_per_feature, np.random.default_rng(seeds[j])))
        else:
            res = kmeans_1d(col, cfg.mfs_per_feature, seeds[j], cfg.kmeans_iters, cfg.kmeans_restarts)
            bank.append([mf_from_cluster(col, res, c) for c in range(cfg.mfs_per_feature)])
    return bank


def build_model(ds_train: Dataset, cfg: InitConfig = InitConfig(),
                standardizer: StandardizationStats | None = None) -> TskModel:
    """Initial model for standardized training data; records an MF snapshot."""
    need = max(cfg.n_rules, cfg.mfs_per_feature)
    if ds_train.n_samples < need:
        raise TooFewPoints(f"{ds_train.n_samples} training rows, need at least {need}")
    mf_seed, rule_seed, cons_seed = np.random.SeedSequence(cfg.seed).spawn(3)
    bank = build_mf_bank(ds_train, cfg, mf_seed)
    antecedents = assign_rule_antecedents(
        ds_train.X, bank, cfg.n_rules, rule_seed, cfg.kmeans_iters, cfg.kmeans_restarts
    )
    weights, biases = init_consequents(cfg.n_rules, ds_train.n_features, cfg.consequent_range, cons_seed)
    rules = [Rule(tuple(antecedents[k]), weights[k], float(biases[k])) for k in range(cfg.n_rules)]
    model = TskModel.from_parts(ds_train.columns, bank, rules, standardizer, ds_train.kinds)
    return model.evolve(init_centers=model.centers.copy(), init_log_widths=model.log_widths.copy())

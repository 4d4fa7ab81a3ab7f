import mpmath
import numpy as np
import pytest

from tskfuzzy.core import TskModel
from tskfuzzy.data import CONTINUOUS, Dataset, StandardizationStats, infer_kinds


def random_model(rng, n=3, m=4, max_mfs=3, standardize=False, width_range=(0.5, 2.0)):
    counts = rng.integers(1, max_mfs + 1, size=n)
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    M = int(offsets[-1])
    antecedents = np.stack([rng.integers(0, counts[i], size=m) for i in range(n)], axis=1)
    if standardize:
        stats = StandardizationStats(rng.normal(0, 2, n), rng.uniform(0.5, 3.0, n))
    else:
        stats = StandardizationStats.identity(n)
    return TskModel(
        feature_names=tuple(f"f{i + 1}" for i in range(n)),
        kinds=(CONTINUOUS,) * n,
        centers=rng.normal(0, 1, M),
        log_widths=np.log(rng.uniform(*width_range, M)),
        mf_offsets=offsets,
        antecedents=antecedents.astype(np.int64),
        weights=rng.uniform(-1, 1, (m, n)),
        biases=rng.uniform(-1, 1, m),
        standardizer=stats,
    )


def naive_probability(model, x_raw, dps=40):
    """Direct transcription of the TSK formulas in extended precision."""
    with mpmath.workdps(dps):
        xs = [
            (mpmath.mpf(float(x_raw[i])) - mpmath.mpf(float(model.standardizer.means[i])))
            / mpmath.mpf(float(model.standardizer.stds[i]))
            for i in range(model.n_features)
        ]
        num = mpmath.mpf(0)
        den = mpmath.mpf(0)
        for k in range(model.n_rules):
            alpha = mpmath.mpf(1)
            for i in range(model.n_features):
                g = int(model.mf_offsets[i] + model.antecedents[k, i])
                c = mpmath.mpf(float(model.centers[g]))
                s = mpmath.exp(mpmath.mpf(float(model.log_widths[g])))
                alpha *= mpmath.exp(-((xs[i] - c) ** 2) / (2 * s * s))
            f = mpmath.mpf(float(model.biases[k]))
            for i in range(model.n_features):
                f += mpmath.mpf(float(model.weights[k, i])) * xs[i]
            num += alpha * f
            den += alpha
        y = num / den
        return float(1 / (1 + mpmath.exp(-y))), float(y)


def two_blobs(n_per_class=500, seed=0, sep=2.0, spread=0.7, noise=0.0):
    rng = np.random.default_rng(seed)
    X = np.vstack([
        rng.normal(-sep, spread, (n_per_class, 2)),
        rng.normal(sep, spread, (n_per_class, 2)),
    ])
    y = np.r_[np.zeros(n_per_class, dtype=np.int64), np.ones(n_per_class, dtype=np.int64)]
    if noise:
        flip = rng.random(len(y)) < noise
        y = np.where(flip, 1 - y, y)
    return Dataset(("x1", "x2"), X, y, infer_kinds(X))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fd_max_relative_error(model, X, y, l2=0.0, h=1e-5, floor=1e-6):
    """Largest coordinate-wise discrepancy between the analytic gradient and
    central differences on the flat parameter vector.

    Coordinates whose gradient is below ``floor`` in magnitude are compared on
    an absolute scale so round-off in near-zero entries does not dominate.
    """
    from tskfuzzy.training import flatten, gradient, loss, unflatten

    theta = flatten(model)
    g = gradient(model, X, y, l2)
    worst = 0.0
    for j in range(theta.size):
        tp, tm = theta.copy(), theta.copy()
        tp[j] += h
        tm[j] -= h
        fd = (loss(unflatten(model, tp), X, y, l2).total - loss(unflatten(model, tm), X, y, l2).total) / (2 * h)
        worst = max(worst, abs(g[j] - fd) / max(abs(g[j]), abs(fd), floor))
    return worst


def standardized(ds):
    from tskfuzzy.data import fit_standardizer, standardize_dataset

    stats = fit_standardizer(ds)
    return standardize_dataset(ds, stats), stats


def pytest_terminal_summary(terminalreporter):
    lines = getattr(terminalreporter.config, "_acceptance_results", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

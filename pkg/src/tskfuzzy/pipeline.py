"""End-to-end fitting shared by the CLI verbs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import TskModel, predict_proba
from .data import (
    DEFAULT_MI_BINS,
    Dataset,
    FeatureRanking,
    fit_standardizer,
    rank_features,
    standardize_dataset,
    with_kinds,
)
from .errors import InvalidConfig
from .initialization import InitConfig, build_model
from .metrics import MetricsReport, evaluate
from .training import TrainConfig, TrainReport, train


@dataclass(frozen=True)
class RunConfig:
    label: str = "label"
    exclude: tuple[str, ...] = ()
    top_features: int | None = None
    mi_bins: int = DEFAULT_MI_BINS
    test_fraction: float = 0.2
    threshold: float = 0.5
    binary_columns: tuple[str, ...] = ()
    continuous_columns: tuple[str, ...] = ()
    seed: int = 0
    init: InitConfig = field(default_factory=InitConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.top_features is not None and self.top_features < 1:
            raise InvalidConfig("top_features must be >= 1")
        if not 0 < self.test_fraction < 1:
            raise InvalidConfig("test_fraction must lie in (0, 1)")
        if not 0 < self.threshold < 1:
            raise InvalidConfig("threshold must lie in (0, 1)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["init"]["consequent_range"] = list(d["init"]["consequent_range"])
        for key in ("exclude", "binary_columns", "continuous_columns"):
            d[key] = list(d[key])
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def prepare(ds: Dataset, cfg: RunConfig) -> Dataset:
    return with_kinds(ds, cfg.binary_columns, cfg.continuous_columns)


def select_features(ds: Dataset, cfg: RunConfig) -> tuple[FeatureRanking, Dataset]:
    # columns already dropped at load time need no second exclusion
    ranking = rank_features(ds, cfg.mi_bins, [c for c in cfg.exclude if c in ds.columns])
    return ranking, ds.select(ranking.top(cfg.top_features))


def fit_rows(ds: Dataset, train_rows, cfg: RunConfig, log=None) -> tuple[TskModel, TrainReport]:
    """Standardize on ``train_rows`` only, warm-start, train; model carries provenance."""
    stats = fit_standardizer(ds, train_rows)
    ds_std = standardize_dataset(ds.subset(train_rows), stats)
    model = build_model(ds_std, cfg.init, stats)
    model, report = train(model, ds_std, cfg.train, log=log)
    provenance = {"seed": cfg.seed, "config_hash": cfg.config_hash(), "config": cfg.to_dict(),
                  "best_epoch": report.best_epoch, "stopped_epoch": report.stopped_epoch}
    return model.evolve(threshold=cfg.threshold, provenance=provenance), report


def evaluate_rows(model: TskModel, ds: Dataset, rows) -> MetricsReport:
    rows = np.asarray(rows, dtype=np.intp)
    p = predict_proba(model, ds.X[rows])
    return evaluate(ds.y[rows], p, model.threshold)

"""Per-sample rule attributions, readable rules and MF snapshots."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import LOG_SIGMA_FLOOR, TskModel, forward
from .data import BINARY, CONTINUOUS, StandardizationStats
from .errors import ShapeMismatch

BEFORE = "before"
AFTER = "after"
DOT = "·"


@dataclass(frozen=True)
class RuleActivationBreakdown:
    sample_id: int
    fractions: np.ndarray
    dominant_rule: int
    dominant_fraction: float

    def percentages(self) -> list[str]:
        return [f"{100.0 * f:.2f}" for f in self.fractions]


def breakdown_from_firing(firing, sample_id: int = 0) -> RuleActivationBreakdown:
    firing = np.asarray(firing, dtype=np.float64)
    fractions = firing / firing.sum()
    k = int(np.argmax(fractions))  # first maximum wins ties
    return RuleActivationBreakdown(sample_id, fractions, k, float(fractions[k]))


def rule_activations(model: TskModel, x_raw, sample_id: int = 0) -> RuleActivationBreakdown:
    trace = forward(model, x_raw)
    k = int(np.argmax(trace.normalized_firing))
    return RuleActivationBreakdown(
        sample_id, trace.normalized_firing, k, float(trace.normalized_firing[k])
    )


def _format_value(v: float) -> str:
    r = round(v)
    return str(int(r)) if abs(v - r) < 1e-6 else f"{v:g}"


def linguistic_labels(mf_bank, feature: int, kind: str = CONTINUOUS,
                      stats: StandardizationStats | None = None) -> list[str]:
    """Label per MF (in bank order) derived from the current center order.

    Binary features are labelled by the raw value each MF sits on, which needs
    the standardizer to undo z-scoring.
    """
    centers = np.array([mf.center for mf in mf_bank[feature]])
    if kind == BINARY:
        raw = centers if stats is None else centers * stats.stds[feature] + stats.means[feature]
        return [f"IS_{_format_value(float(v))}" for v in raw]
    k = len(centers)
    if k == 1:
        ordered = ["ANY"]
    elif k == 2:
        ordered = ["LOW", "HIGH"]
    elif k == 3:
        ordered = ["LOW", "MEDIUM", "HIGH"]
    else:
        ordered = ["LOW"] + [f"MED-{i}" for i in range(1, k - 1)] + ["HIGH"]
    labels = [""] * k
    for rank, idx in enumerate(np.argsort(centers, kind="stable")):
        labels[idx] = ordered[rank]
    return labels


@dataclass(frozen=True)
class RenderedRule:
    index: int
    text: str
    labels: tuple[str, ...]


def render_rules(model: TskModel, symbolic_bias: bool = False,
                 feature_names: Sequence[str] | None = None) -> list[RenderedRule]:
    names = list(feature_names or model.feature_names)
    bank = model.mf_bank
    labels = [linguistic_labels(bank, i, model.kinds[i], model.standardizer) for i in range(model.n_features)]
    out = []
    for k in range(model.n_rules):
        rule_labels = tuple(labels[i][model.antecedents[k, i]] for i in range(model.n_features))
        cond = " AND ".join(f"{names[i]} is {rule_labels[i]}" for i in range(model.n_features))
        bias = f"b{k + 1}" if symbolic_bias else f"{model.biases[k]:.2f}"
        terms = []
        for i, w in enumerate(model.weights[k]):
            mag = f"{abs(w):.2f}"
            if mag == "0.00":
                continue
            terms.append(f" {'-' if w < 0 else '+'} {mag}{DOT}{names[i]}")
        out.append(RenderedRule(k, f"IF {cond} THEN y = {bias}{''.join(terms)}", rule_labels))
    return out


_TERM = re.compile(r"\s([+-])\s(\d+\.\d+)" + DOT + r"(\S+)")


def parse_rule_text(text: str) -> tuple[dict[str, str], str, dict[str, float]]:
    """Inverse of a rendered rule: (labels by feature, bias token, weights by feature)."""
    cond, rhs = text[len("IF "):].split(" THEN y = ", 1)
    labels = {}
    for clause in cond.split(" AND "):
        name, label = clause.rsplit(" is ", 1)
        labels[name] = label
    bias, _, rest = rhs.partition(" ")
    weights = {name: float(sign + mag) for sign, mag, name in _TERM.findall(" " + rest)}
    return labels, bias, weights


@dataclass(frozen=True)
class MfSnapshot:
    tag: str
    feature_names: tuple[str, ...]
    params: tuple[tuple[tuple[float, float], ...], ...]


def _snapshot(tag, model: TskModel, centers, log_widths) -> MfSnapshot:
    widths = np.exp(np.maximum(log_widths, LOG_SIGMA_FLOOR))
    params = tuple(
        tuple((float(centers[g]), float(widths[g])) for g in range(a, b))
        for a, b in zip(model.mf_offsets[:-1], model.mf_offsets[1:])
    )
    return MfSnapshot(tag, tuple(model.feature_names), params)


def snapshot_after(model: TskModel) -> MfSnapshot:
    return _snapshot(AFTER, model, model.centers, model.log_widths)


def snapshot_before(model: TskModel) -> MfSnapshot:
    if model.init_centers is None:
        raise ValueError("model carries no initialization snapshot")
    return _snapshot(BEFORE, model, model.init_centers, model.init_log_widths)


def mf_drift(before: MfSnapshot, after: MfSnapshot, feature) -> list[tuple[float, float]]:
    i = before.feature_names.index(feature) if isinstance(feature, str) else int(feature)
    if before.feature_names != after.feature_names or len(before.params[i]) != len(after.params[i]):
        raise ShapeMismatch("snapshots do not describe the same MF bank")
    return [(ca - cb, wa - wb) for (cb, wb), (ca, wa) in zip(before.params[i], after.params[i])]


def write_activations(breakdown: RuleActivationBreakdown, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rule_k", "fraction", "percent"])
        for k, (f, pct) in enumerate(zip(breakdown.fractions, breakdown.percentages()), start=1):
            w.writerow([k, repr(float(f)), pct])


def write_rules(rules: Sequence[RenderedRule], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in rules:
            fh.write(f"R{r.index + 1}: {r.text}\n")


def write_snapshots(snapshots: Sequence[MfSnapshot], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "mf_index", "center", "width", "tag"])
        for snap in snapshots:
            for name, bank in zip(snap.feature_names, snap.params):
                for j, (c, s) in enumerate(bank):
                    w.writerow([name, j, repr(c), repr(s), snap.tag])


def read_snapshots(path) -> dict[str, MfSnapshot]:
    grouped: dict[str, dict[str, list]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            feats = grouped.setdefault(row["tag"], {})
            feats.setdefault(row["feature"], []).append(
                (int(row["mf_index"]), float(row["center"]), float(row["width"]))
            )
    out = {}
    for tag, feats in grouped.items():
        names = tuple(feats)
        params = tuple(tuple((c, s) for _, c, s in sorted(feats[n])) for n in names)
        out[tag] = MfSnapshot(tag, names, params)
    return out

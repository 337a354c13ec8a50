"""From clusters and per-subject metrics to an ordered severity continuum.

Metric columns are normalized to [0, 1] with 1 meaning healthier; the
severity score of a subject is 1 minus the mean of its normalized
cognitive metrics, so 0 is the healthiest possible subject.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import (
    AllMissingInClass,
    ConfigError,
    DataError,
    DegenerateBandwidth,
    DegenerateVariance,
    MalformedHeader,
    MissingColumn,
    SparseCell,
    TooFewSamples,
)
from .kde import gaussian_density, silverman_bandwidth

HIGHER = "higher_is_better"
LOWER = "lower_is_better"
ORIENTATIONS = (HIGHER, LOWER)
COGNITIVE_COLUMNS = ("pairs_matching", "prospective_memory", "fluid_intelligence")
DEFAULT_ORIENTATION = {
    "pairs_matching": LOWER,
    "prospective_memory": HIGHER,
    "fluid_intelligence": HIGHER,
    "fractal_dimension": HIGHER,
    "vessel_density": HIGHER,
}


@dataclass(frozen=True)
class MetricTable:
    """Named metric columns; ``missing[name]`` marks absent entries (their value is meaningless)."""

    sample_ids: tuple[str, ...]
    values: Mapping[str, np.ndarray]
    orientation: Mapping[str, str]
    missing: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.sample_ids)
        vals, miss = {}, {}
        for name, col in self.values.items():
            col = np.asarray(col, dtype=np.float64).copy()
            if col.shape != (n,):
                raise DataError(f"column {name!r} has shape {col.shape}, expected ({n},)")
            m = np.asarray(self.missing.get(name, np.zeros(n, bool)), dtype=bool).copy()
            if m.shape != (n,):
                raise DataError(f"missing mask of {name!r} has the wrong length")
            if not np.isfinite(col[~m]).all():
                raise DataError(f"column {name!r} has non-finite values not marked missing")
            if name not in self.orientation:
                raise MalformedHeader(f"no orientation declared for column {name!r}")
            if self.orientation[name] not in ORIENTATIONS:
                raise MalformedHeader(f"orientation of {name!r} must be one of {ORIENTATIONS}")
            col[m] = 0.0
            col.setflags(write=False)
            m.setflags(write=False)
            vals[name], miss[name] = col, m
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "missing", miss)
        object.__setattr__(self, "orientation", {k: self.orientation[k] for k in vals})

    @property
    def columns(self) -> list[str]:
        return list(self.values)

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    def has_missing(self) -> bool:
        return any(m.any() for m in self.missing.values())

    def column(self, name: str) -> np.ndarray:
        if name not in self.values:
            raise MissingColumn(f"no column named {name!r}")
        return self.values[name]

    def replace(self, values: Mapping[str, np.ndarray], missing=None) -> "MetricTable":
        return MetricTable(self.sample_ids, values, self.orientation, missing or {})


def read_metric_table(path, orientation_path=None) -> MetricTable:
    """CSV with a sample_id column; empty cells or NA are missing.

    Orientations come from the sidecar JSON (``{"orientation": {...}}`` or a
    plain mapping), defaulting to ``<path>.orientation.json`` if present and
    otherwise to the built-in defaults for known metric names.
    """
    path = Path(path)
    text = path.read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not rows[0] or rows[0][0] != "sample_id":
        raise MalformedHeader(f"{path}: first column must be sample_id")
    names = rows[0][1:]
    ids, cols, miss = [], {k: [] for k in names}, {k: [] for k in names}
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(names) + 1:
            raise DataError(f"{path}:{r}: expected {len(names) + 1} fields, got {len(row)}")
        ids.append(row[0])
        for k, v in zip(names, row[1:]):
            v = v.strip()
            absent = v == "" or v.upper() in ("NA", "NAN")
            miss[k].append(absent)
            try:
                cols[k].append(0.0 if absent else float(v))
            except ValueError:
                raise DataError(f"{path}:{r}: non-numeric value {v!r} in {k!r}") from None
    if orientation_path is None:
        side = path.with_name(path.name + ".orientation.json")
        orientation_path = side if side.exists() else None
    orient = dict(DEFAULT_ORIENTATION)
    if orientation_path is not None:
        spec = json.loads(Path(orientation_path).read_text())
        orient.update(spec.get("orientation", spec))
    return MetricTable(tuple(ids), cols, {k: orient.get(k, "") for k in names}, miss)


def write_metric_table(table: MetricTable, path) -> None:
    """Write the CSV plus the ``.orientation.json`` sidecar."""
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id"] + table.columns)
    for i, sid in enumerate(table.sample_ids):
        w.writerow([sid] + ["" if table.missing[k][i] else repr(float(table.values[k][i])) for k in table.columns])
    path.write_text(buf.getvalue())
    side = path.with_name(path.name + ".orientation.json")
    side.write_text(json.dumps({"orientation": dict(table.orientation)}, indent=2, sort_keys=True))


def impute_by_class(table: MetricTable, labels) -> MetricTable:
    """Replace missing entries with the mean of present entries of the same class."""
    labels = np.asarray(labels).ravel()
    if len(labels) != table.n_samples:
        raise DataError(f"{len(labels)} labels for {table.n_samples} samples")
    out = {}
    for name, col in table.values.items():
        m = table.missing[name]
        col = col.copy()
        for c in np.unique(labels[m]):
            donors = (labels == c) & ~m
            if not donors.any():
                raise AllMissingInClass(f"column {name!r} has no values for class {c}")
            col[(labels == c) & m] = col[donors].mean()
        out[name] = col
    return table.replace(out)


def normalize_unit(table: MetricTable) -> MetricTable:
    """Min-max scale each column to [0, 1], flipping lower_is_better columns; constant columns become 0.5."""
    if table.has_missing():
        raise DataError("impute missing values before normalizing")
    out = {}
    for name, col in table.values.items():
        lo, hi = col.min(), col.max()
        if hi > lo:
            z = (col - lo) / (hi - lo)
        else:
            z = np.full_like(col, 0.5)
        if table.orientation[name] == LOWER:
            z = 1.0 - z
        out[name] = z
    return MetricTable(table.sample_ids, out, {k: HIGHER for k in out})


def ad_score(normalized: MetricTable, columns: Sequence[str] = COGNITIVE_COLUMNS) -> np.ndarray:
    """1 - mean of the health-oriented normalized columns: 0 healthiest, 1 most severe."""
    if not columns:
        raise ConfigError("at least one score column is required")
    stack = np.column_stack([normalized.column(c) for c in columns])
    return np.clip(1.0 - stack.mean(axis=1), 0.0, 1.0)


@dataclass
class ContinuumReport:
    order: list[int]
    names: dict[int, str]
    mean_score: dict[int, float]
    score_range: dict[int, tuple[float, float]]
    sizes: dict[int, int]
    label_counts: dict[int, tuple[int, int]]
    metric_means: dict[int, dict[str, float]]
    sample_scores: np.ndarray
    sample_ids: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        clusters = []
        for c in self.order:
            clusters.append({
                "cluster": c,
                "name": self.names[c],
                "size": self.sizes[c],
                "n_label0": self.label_counts[c][0],
                "n_label1": self.label_counts[c][1],
                "mean_score": self.mean_score[c],
                "score_min": self.score_range[c][0],
                "score_max": self.score_range[c][1],
                "metric_means": self.metric_means[c],
            })
        ids = self.sample_ids or tuple(f"s{i}" for i in range(len(self.sample_scores)))
        return {
            "order": list(self.order),
            "clusters": clusters,
            "samples": [{"sample_id": s, "score": float(v)} for s, v in zip(ids, self.sample_scores)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def order_clusters(assignment, scores, labels, normalized: MetricTable | None = None) -> ContinuumReport:
    """Sort clusters by mean score (ties: smaller id) and name them CN-i, Mixed, AD-j."""
    lab = np.asarray(getattr(assignment, "labels", assignment)).ravel()
    scores = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel()
    if not len(lab) == len(scores) == len(y):
        raise DataError("cluster labels, scores and class labels must have equal length")
    ids = sorted(int(c) for c in np.unique(lab))
    mean = {c: float(scores[lab == c].mean()) for c in ids}
    order = sorted(ids, key=lambda c: (mean[c], c))
    counts = {c: (int(((lab == c) & (y == 0)).sum()), int(((lab == c) & (y == 1)).sum())) for c in ids}
    kinds = {c: "CN" if counts[c][1] == 0 else "AD" if counts[c][0] == 0 else "Mixed" for c in ids}
    n_mixed = sum(k == "Mixed" for k in kinds.values())
    seen = {"CN": 0, "AD": 0, "Mixed": 0}
    names = {}
    for c in order:
        k = kinds[c]
        seen[k] += 1
        names[c] = "Mixed" if k == "Mixed" and n_mixed == 1 else f"{k}-{seen[k]}"
    metric_means = {c: {} for c in ids}
    if normalized is not None:
        for name, col in normalized.values.items():
            for c in ids:
                metric_means[c][name] = float(col[lab == c].mean())
    return ContinuumReport(
        order=order,
        names=names,
        mean_score=mean,
        score_range={c: (float(scores[lab == c].min()), float(scores[lab == c].max())) for c in ids},
        sizes={c: int((lab == c).sum()) for c in ids},
        label_counts=counts,
        metric_means=metric_means,
        sample_scores=scores,
        sample_ids=normalized.sample_ids if normalized is not None else (),
    )


def chi_squared_2x2(table) -> tuple[float, float]:
    """Pearson chi-squared (no continuity correction) on a 2x2 count table."""
    t = np.asarray(table, dtype=np.float64)
    if t.shape != (2, 2) or (t < 0).any():
        raise DataError(f"expected a 2x2 table of non-negative counts, got {t.tolist()}")
    total = t.sum()
    expected = np.outer(t.sum(axis=1), t.sum(axis=0)) / total if total > 0 else np.zeros((2, 2))
    if (expected < 1).any():
        raise SparseCell(f"expected cell count below 1: {expected.tolist()}")
    stat = float(((t - expected) ** 2 / expected).sum())
    return stat, float(stats.chi2.sf(stat, df=1))


def two_group_test(a, b, kind: str = "t_test") -> tuple[float, float]:
    """Two-sided pooled-variance t-test, or chi-squared on two samples of a binary category."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if kind == "t_test":
        a = a.astype(np.float64)
        b = b.astype(np.float64)
        if len(a) < 2 or len(b) < 2:
            raise TooFewSamples("each group needs at least 2 samples")
        pooled = ((len(a) - 1) * a.var(ddof=1) + (len(b) - 1) * b.var(ddof=1)) / (len(a) + len(b) - 2)
        if not pooled > 0:
            raise DegenerateVariance("pooled variance is zero")
        res = stats.ttest_ind(a, b, equal_var=True)
        return float(res.statistic), float(res.pvalue)
    if kind == "chi_squared":
        cats = np.unique(np.concatenate([a, b]))
        if len(cats) > 2:
            raise DataError(f"chi-squared test expects a binary category, got {len(cats)} levels")
        if len(cats) < 2:
            raise SparseCell("only one category observed")
        table = [[int((a == c).sum()) for c in cats], [int((b == c).sum()) for c in cats]]
        return chi_squared_2x2(table)
    raise ConfigError(f"unknown test kind {kind!r}")


def kde_1d(samples, bandwidth: float | str = "silverman", grid: int = 512) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian KDE on ``grid`` points spanning [min - 3h, max + 3h]."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if len(x) < 2:
        raise TooFewSamples("need at least 2 samples")
    if grid < 2:
        raise ConfigError(f"grid must be >= 2, got {grid}")
    if bandwidth == "silverman":
        h = silverman_bandwidth(x)
    else:
        h = float(bandwidth)
        if not h > 0:
            raise DegenerateBandwidth(f"bandwidth must be positive, got {bandwidth}")
    xs = np.linspace(x.min() - 3 * h, x.max() + 3 * h, grid)
    return xs, gaussian_density(x, xs, h)

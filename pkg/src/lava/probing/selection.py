"""Critical-neuron selection: SVR-RFE per layer, fold ensembling, Jaccard checks."""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ..errors import ConfigError, DegenerateInput, LayerMismatch, LayerSetMismatch, SelectionTooLarge
from ..store import ActivationDataset, NeuronId
from .svr import SvrConfig, svr_feature_scores, train_epsilon_svr

SANITY_THRESHOLD = 0.1


@dataclass(frozen=True)
class RankedNeuron:
    neuron: NeuronId
    score: float
    rank: int


@dataclass(frozen=True)
class CriticalNeuronSet:
    layer: str
    neurons: tuple[RankedNeuron, ...]
    fold: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "neurons", tuple(self.neurons))
        ranks = [e.rank for e in self.neurons]
        if ranks != list(range(1, len(ranks) + 1)):
            raise ValueError(f"ranks must be 1..P in order, got {ranks}")
        scores = [e.score for e in self.neurons]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("scores must be non-increasing in rank")

    def neuron_ids(self) -> list[NeuronId]:
        return [e.neuron for e in self.neurons]

    def to_dict(self) -> dict:
        return {
            "layer": self.layer,
            "fold": self.fold,
            "neurons": [
                {"layer": e.neuron.layer, "index": e.neuron.index, "score": e.score, "rank": e.rank}
                for e in self.neurons
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CriticalNeuronSet":
        neurons = tuple(
            RankedNeuron(NeuronId(e["layer"], int(e["index"])), float(e["score"]), int(e["rank"]))
            for e in d["neurons"]
        )
        return cls(d["layer"], neurons, d.get("fold"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CriticalNeuronSet":
        return cls.from_dict(json.loads(text))


def rfe_schedule(n_features: int, n_select: int, step: int) -> list[int]:
    """Number of columns removed in each elimination round."""
    if step < 1:
        raise ConfigError(f"step must be >= 1, got {step}")
    if n_select > n_features:
        raise SelectionTooLarge(f"cannot select {n_select} of {n_features} neurons")
    out = []
    left = n_features
    while left > n_select:
        k = min(step, left - n_select)
        out.append(k)
        left -= k
    return out


def rfe_select(
    X,
    y_hat,
    cfg: SvrConfig = SvrConfig(),
    n_select: int = 20,
    step: int = 1000,
    layer: str = "layer",
    fold: int | None = None,
    trace: list | None = None,
) -> CriticalNeuronSet:
    """Recursive feature elimination driven by squared linear-SVR weights.

    ``y_hat`` is the model's predicted label vector (0/1), used as the
    regression target.  Each round refits on the surviving columns and
    drops the ``min(step, surviving - n_select)`` lowest scores; among equal
    scores the larger neuron index goes first.  The survivors are ranked by
    one more fit on exactly ``n_select`` columns.  If ``trace`` is given,
    the surviving column indices of every round are appended to it.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y_hat, dtype=np.float64).ravel()
    if X.ndim != 2:
        raise DegenerateInput(f"X must be 2-D, got shape {X.shape}")
    if n_select < 1:
        raise ConfigError(f"n_select must be >= 1, got {n_select}")
    schedule = rfe_schedule(X.shape[1], n_select, step)

    alive = np.arange(X.shape[1])
    if trace is not None:
        trace.append(alive.copy())
    for k in schedule:
        model = train_epsilon_svr(X[:, alive], y, cfg)
        scores = svr_feature_scores(model)
        # ascending score, descending index: the first k are removed
        order = np.lexsort((-alive, scores))
        keep = np.sort(order[k:])
        alive = alive[keep]
        if trace is not None:
            trace.append(alive.copy())

    model = train_epsilon_svr(X[:, alive], y, cfg)
    scores = svr_feature_scores(model)
    order = np.lexsort((alive, -scores))
    neurons = tuple(
        RankedNeuron(NeuronId(layer, int(alive[p])), float(scores[p]), r)
        for r, p in enumerate(order, start=1)
    )
    return CriticalNeuronSet(layer, neurons, fold)


def worker_count() -> int:
    """Worker cap from LAVA_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("LAVA_THREADS", "1")))
    except ValueError:
        return 1


def probe_dataset(
    dataset: ActivationDataset,
    y_hat=None,
    cfg: SvrConfig = SvrConfig(),
    n_select: int = 20,
    step: int = 1000,
    fold: int | None = None,
    workers: int | None = None,
) -> list[CriticalNeuronSet]:
    """Run RFE independently on every layer; ``y_hat`` defaults to the dataset labels."""
    y = dataset.labels if y_hat is None else np.asarray(y_hat)
    if len(y) != dataset.n_samples:
        raise DegenerateInput(f"target has {len(y)} entries for {dataset.n_samples} samples")
    workers = worker_count() if workers is None else workers

    def run(la):
        return rfe_select(la.matrix, y, cfg, n_select, step, la.layer, fold)

    if workers > 1 and len(dataset.layers) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, dataset.layers))
    return [run(la) for la in dataset.layers]


@dataclass(frozen=True)
class EnsembleEntry:
    fold: int | None
    neuron: NeuronId
    score: float


def ensemble_folds(sets: Sequence[CriticalNeuronSet]) -> list[EnsembleEntry]:
    """Concatenate one layer's selections across folds, keeping repeats."""
    if not sets:
        return []
    layer = sets[0].layer
    for s in sets:
        if s.layer != layer:
            raise LayerMismatch(f"cannot ensemble layer {s.layer!r} with {layer!r}")
    ordered = sorted(enumerate(sets), key=lambda t: (t[1].fold if t[1].fold is not None else -1, t[0]))
    return [EnsembleEntry(s.fold, e.neuron, e.score) for _, s in ordered for e in s.neurons]


def jaccard_index(a: Iterable, b: Iterable) -> float:
    """|a & b| / |a | b|, with J(empty, empty) = 1."""
    a, b = set(a), set(b)
    union = a | b
    if not union:
        return 1.0
    return len(a & b) / len(union)


def jaccard_matrix(sets: Sequence[CriticalNeuronSet]) -> np.ndarray:
    """Pairwise Jaccard similarity between the neuron sets of several folds."""
    ids = [set(s.neuron_ids()) for s in sets]
    n = len(ids)
    out = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = jaccard_index(ids[i], ids[j])
    return out


@dataclass
class SanityReport:
    per_layer: dict[str, float]
    threshold: float = SANITY_THRESHOLD
    suspicious: list[str] = field(default_factory=list)

    @property
    def mean_jaccard(self) -> float:
        return float(np.mean(list(self.per_layer.values()))) if self.per_layer else 0.0

    @property
    def passed(self) -> bool:
        return self.mean_jaccard <= self.threshold

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "explanation insensitive — FAIL"

    def to_dict(self) -> dict:
        return {
            "per_layer": dict(self.per_layer),
            "mean_jaccard": self.mean_jaccard,
            "threshold": self.threshold,
            "suspicious_layers": list(self.suspicious),
            "verdict": self.verdict,
        }

    def table(self) -> str:
        w = max([len("layer")] + [len(k) for k in self.per_layer])
        lines = [f"{'layer':<{w}}  jaccard  flag"]
        for layer, j in self.per_layer.items():
            flag = "SUSPICIOUS" if layer in self.suspicious else ""
            lines.append(f"{layer:<{w}}  {j:7.4f}  {flag}".rstrip())
        lines.append(f"{'mean':<{w}}  {self.mean_jaccard:7.4f}  {self.verdict}")
        return "\n".join(lines)


def _group_by_layer(sets) -> dict[str, list[CriticalNeuronSet]]:
    if isinstance(sets, Mapping):
        return {k: list(v) for k, v in sets.items()}
    out: dict[str, list[CriticalNeuronSet]] = {}
    for s in sets:
        out.setdefault(s.layer, []).append(s)
    return out


def sanity_check(trained, randomized, threshold: float = SANITY_THRESHOLD) -> SanityReport:
    """Compare selections from a trained and a randomized model, layer by layer.

    Each side is either a mapping layer -> list of sets (one per fold) or a
    flat list of sets.  Folds are merged into one deduplicated set per layer.
    """
    a = _group_by_layer(trained)
    b = _group_by_layer(randomized)
    if set(a) != set(b):
        raise LayerSetMismatch(f"layer sets differ: {sorted(set(a) ^ set(b))}")
    per_layer = {}
    for layer in a:
        sa = {n for s in a[layer] for n in s.neuron_ids()}
        sb = {n for s in b[layer] for n in s.neuron_ids()}
        per_layer[layer] = jaccard_index(sa, sb)
    suspicious = [k for k, v in per_layer.items() if v > threshold]
    return SanityReport(per_layer, threshold, suspicious)

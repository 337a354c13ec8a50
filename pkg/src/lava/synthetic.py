"""Seeded synthetic activations with planted latent subgroups."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .store import ActivationDataset, LayerActivations, save_activation_dataset


@dataclass(frozen=True)
class SynthSpec:
    n_per_subgroup: int = 20
    subgroups_per_class: int = 3
    n_layers: int = 3
    layer_width: int = 256
    n_informative: int = 3
    noise_sigma: float = 1.0
    seed: int = 0
    spacing: float = 6.0  # distance between subgroup levels, in units of noise_sigma

    def __post_init__(self):
        if min(self.n_per_subgroup, self.subgroups_per_class, self.n_layers, self.layer_width) < 1:
            raise ConfigError("counts in SynthSpec must be positive")
        if not 0 <= self.n_informative <= self.layer_width:
            raise ConfigError("n_informative must be in [0, layer_width]")
        if self.noise_sigma < 0:
            raise ConfigError("noise_sigma must be non-negative")
        if self.spacing < 6.0:
            raise ConfigError("subgroup spacing must be at least 6 noise_sigma")

    @property
    def n_samples(self) -> int:
        return 2 * self.subgroups_per_class * self.n_per_subgroup

    @property
    def n_subgroups(self) -> int:
        return 2 * self.subgroups_per_class


@dataclass(frozen=True)
class GroundTruth:
    subgroups: np.ndarray
    informative: dict[str, list[int]]

    def to_dict(self) -> dict:
        return {"subgroups": self.subgroups.tolist(), "informative": self.informative}


def generate_synthetic_activations(spec: SynthSpec = SynthSpec()) -> tuple[ActivationDataset, GroundTruth]:
    """Activations where informative columns carry subgroup means and the rest is noise.

    Subgroups 0..S-1 belong to class 0 and S..2S-1 to class 1.  On every
    informative column the subgroups of class 0 sit at levels drawn as a
    permutation of {0, ..., S-1} and those of class 1 at a permutation of
    {S, ..., 2S-1}, scaled by ``spacing * noise_sigma``; so each informative
    column separates the classes and any two subgroups differ by at least
    ``spacing`` noise units on it.  Informative columns are placed at random
    positions in each layer.
    """
    rng = np.random.default_rng(spec.seed)
    S, n_sub = spec.subgroups_per_class, spec.n_per_subgroup
    subgroups = np.repeat(np.arange(2 * S), n_sub)
    labels = (subgroups >= S).astype(np.uint8)
    unit = spec.spacing * max(spec.noise_sigma, 1.0)
    layers, informative = [], {}
    for l in range(spec.n_layers):
        name = f"layer{l + 1}"
        cols = np.sort(rng.choice(spec.layer_width, spec.n_informative, replace=False))
        X = rng.normal(0.0, spec.noise_sigma, size=(spec.n_samples, spec.layer_width))
        for c in cols:
            levels = np.concatenate([rng.permutation(S), S + rng.permutation(S)]) * unit
            X[:, c] += levels[subgroups]
        layers.append(LayerActivations(name, X))
        informative[name] = [int(c) for c in cols]
    ids = tuple(f"s{i:04d}" for i in range(spec.n_samples))
    return ActivationDataset(tuple(layers), labels, ids), GroundTruth(subgroups, informative)


def write_synthetic(spec: SynthSpec, out_dir, format: str = "lavabin") -> dict[str, Path]:
    """Write dataset, ground truth and generator settings; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset, truth = generate_synthetic_activations(spec)
    data_path = out / ("activations.lavabin" if format == "lavabin" else "activations.csv")
    save_activation_dataset(dataset, data_path, format)
    truth_path = out / "ground_truth.json"
    payload = truth.to_dict()
    payload["sample_ids"] = list(dataset.sample_ids)
    payload["spec"] = asdict(spec)
    truth_path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return {"dataset": data_path, "ground_truth": truth_path}


def planted_regression(seed: int, n: int = 120, width: int = 50, n_planted: int = 3, shift: float = 2.0):
    """Binary target plus a noise matrix with ``n_planted`` columns shifted by +-shift along the label.

    Returns (X, y, planted column indices).
    """
    rng = np.random.default_rng(seed)
    y = np.zeros(n)
    y[rng.permutation(n)[: n // 2]] = 1.0
    X = rng.normal(size=(n, width))
    cols = np.sort(rng.choice(width, n_planted, replace=False))
    signs = rng.choice([-1.0, 1.0], n_planted)
    X[:, cols] += shift * signs * y[:, None]
    return X, y, cols

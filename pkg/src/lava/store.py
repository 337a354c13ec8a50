"""Activation datasets: in-memory types, CSV / lavabin I/O, and stacking.

A dataset holds, for N samples, one activation matrix per layer plus the
coarse label vector (0 = NC, 1 = AD).  Two on-disk formats are supported:

* CSV with header ``sample_id,label,<layer>:<index>,...``
* ``lavabin``: magic ``LAVA1``, little-endian, header ``(u32 N, u32 L)``,
  then per layer ``(u32 name_len, utf-8 name, u32 width)``, then N ``u8``
  labels, then each layer's activations as row-major ``f64``.  A trailing
  block of N length-prefixed UTF-8 sample ids follows; files without it
  get ids ``s0 .. s{N-1}``.
"""

from __future__ import annotations

import csv
import io
import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatch,
    MalformedHeader,
    NonFiniteValue,
    SampleOrderMismatch,
    UnknownLabel,
    UnknownNeuron,
)

LAVABIN_MAGIC = b"LAVA1"


@dataclass(frozen=True, order=True)
class NeuronId:
    layer: str
    index: int

    def __str__(self) -> str:
        return f"{self.layer}:{self.index}"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LayerActivations:
    layer: str
    matrix: np.ndarray
    fold: int | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[1] < 1:
            raise DimensionMismatch(f"layer {self.layer!r}: expected N x K matrix with K >= 1, got shape {m.shape}")
        if not np.isfinite(m).all():
            r, c = np.argwhere(~np.isfinite(m))[0]
            raise NonFiniteValue(f"layer {self.layer!r}: non-finite value at row {r}, column {c}")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def width(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class ActivationDataset:
    layers: tuple[LayerActivations, ...]
    labels: np.ndarray
    sample_ids: tuple[str, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        labels = np.asarray(self.labels)
        ids = tuple(str(s) for s in self.sample_ids)
        n = len(ids)
        if labels.shape != (n,):
            raise DimensionMismatch(f"labels have shape {labels.shape}, expected ({n},)")
        bad = set(np.unique(labels).tolist()) - {0, 1}
        if bad:
            raise UnknownLabel(f"labels must be 0 or 1, found {sorted(bad)}")
        if len(set(ids)) != n:
            dup = [s for s, c in Counter(ids).items() if c > 1][0]
            raise DimensionMismatch(f"duplicate sample id {dup!r}")
        names = [la.layer for la in layers]
        if len(set(names)) != len(names):
            raise MalformedHeader(f"duplicate layer names in {names}")
        for la in layers:
            if la.matrix.shape[0] != n:
                raise DimensionMismatch(f"layer {la.layer!r} has {la.matrix.shape[0]} rows, expected {n}")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "labels", _frozen(labels.astype(np.uint8)))
        object.__setattr__(self, "sample_ids", ids)

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    @property
    def layer_names(self) -> list[str]:
        return [la.layer for la in self.layers]

    def layer(self, name: str) -> LayerActivations:
        for la in self.layers:
            if la.layer == name:
                return la
        raise UnknownNeuron(f"no layer named {name!r}")

    def with_fold(self, fold: int) -> "ActivationDataset":
        layers = tuple(LayerActivations(la.layer, la.matrix, fold) for la in self.layers)
        return ActivationDataset(layers, self.labels, self.sample_ids)


@dataclass(frozen=True)
class StackedMatrix:
    matrix: np.ndarray
    columns: tuple[tuple[int | None, NeuronId], ...]
    sample_ids: tuple[str, ...] = ()

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass
class ValidationReport:
    n_samples: int
    layer_widths: dict[str, int]
    label_counts: dict[int, int]
    constant_columns: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_samples": self.n_samples,
            "layer_widths": dict(self.layer_widths),
            "label_counts": {str(k): v for k, v in self.label_counts.items()},
            "constant_columns": dict(self.constant_columns),
        }


# ---------------------------------------------------------------------------
# CSV


def _parse_header(header: Sequence[str]) -> list[tuple[str, int]]:
    if len(header) < 3 or header[0] != "sample_id" or header[1] != "label":
        raise MalformedHeader("header must start with 'sample_id,label' followed by layer:index columns")
    layout: list[tuple[str, int]] = []
    for tok in header[2:]:
        name, sep, idx = tok.rpartition(":")
        if not sep or not name or not idx.isdigit():
            raise MalformedHeader(f"column {tok!r} is not of the form layer:index")
        layout.append((name, int(idx)))
    return layout


def _layer_spans(layout: list[tuple[str, int]]) -> list[tuple[str, int, int]]:
    """Group header columns into contiguous (name, start, width) spans, indices 0..K-1 in order."""
    spans: list[tuple[str, int, int]] = []
    seen: set[str] = set()
    start = 0
    while start < len(layout):
        name = layout[start][0]
        if name in seen:
            raise MalformedHeader(f"columns of layer {name!r} are not contiguous")
        seen.add(name)
        end = start
        while end < len(layout) and layout[end][0] == name:
            if layout[end][1] != end - start:
                raise MalformedHeader(
                    f"layer {name!r}: expected index {end - start}, found {layout[end][1]}"
                )
            end += 1
        spans.append((name, start, end - start))
        start = end
    return spans


def _parse_label(tok: str, row: int) -> int:
    try:
        v = float(tok)
    except ValueError:
        raise UnknownLabel(f"row {row}: label {tok!r} is not 0 or 1") from None
    if v not in (0.0, 1.0):
        raise UnknownLabel(f"row {row}: label {tok!r} is not 0 or 1")
    return int(v)


def read_csv(path: str | Path) -> ActivationDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return _read_csv_stream(fh)


def _read_csv_stream(fh: Iterable[str]) -> ActivationDataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedHeader("empty file") from None
    spans = _layer_spans(_parse_header(header))
    ncol = len(header)
    ids, labels, rows = [], [], []
    for lineno, rec in enumerate(reader, start=1):
        if not rec:
            continue
        if len(rec) != ncol:
            raise DimensionMismatch(f"row {lineno} has {len(rec) - 2} activation fields, header declares {ncol - 2}")
        ids.append(rec[0])
        labels.append(_parse_label(rec[1], lineno))
        try:
            vals = [float(t) for t in rec[2:]]
        except ValueError as exc:
            raise NonFiniteValue(f"row {lineno}: {exc}") from None
        for j, v in enumerate(vals):
            if not math.isfinite(v):
                raise NonFiniteValue(f"row {lineno}, column {header[j + 2]!r}: {v}")
        rows.append(vals)
    data = np.array(rows, dtype=np.float64).reshape(len(rows), ncol - 2)
    layers = tuple(LayerActivations(name, data[:, s : s + w]) for name, s, w in spans)
    return ActivationDataset(layers, np.array(labels, dtype=np.uint8), tuple(ids))


def write_csv(dataset: ActivationDataset, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(dumps_csv(dataset))


def dumps_csv(dataset: ActivationDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["sample_id", "label"]
    for la in dataset.layers:
        header += [f"{la.layer}:{j}" for j in range(la.width)]
    w.writerow(header)
    full = np.hstack([la.matrix for la in dataset.layers]) if dataset.layers else np.zeros((dataset.n_samples, 0))
    for sid, lab, row in zip(dataset.sample_ids, dataset.labels, full):
        w.writerow([sid, int(lab)] + [repr(float(v)) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# lavabin


def dumps_lavabin(dataset: ActivationDataset) -> bytes:
    out = io.BytesIO()
    out.write(LAVABIN_MAGIC)
    out.write(struct.pack("<II", dataset.n_samples, len(dataset.layers)))
    for la in dataset.layers:
        name = la.layer.encode("utf-8")
        out.write(struct.pack("<I", len(name)))
        out.write(name)
        out.write(struct.pack("<I", la.width))
    out.write(np.asarray(dataset.labels, dtype=np.uint8).tobytes())
    for la in dataset.layers:
        out.write(np.ascontiguousarray(la.matrix, dtype="<f8").tobytes())
    for sid in dataset.sample_ids:
        b = sid.encode("utf-8")
        out.write(struct.pack("<I", len(b)))
        out.write(b)
    return out.getvalue()


def write_lavabin(dataset: ActivationDataset, path: str | Path) -> None:
    Path(path).write_bytes(dumps_lavabin(dataset))


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise MalformedHeader(f"truncated lavabin file while reading {what}")
        b = self.buf[self.pos : self.pos + n]
        self.pos += n
        return b

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def loads_lavabin(buf: bytes) -> ActivationDataset:
    cur = _Cursor(buf)
    if cur.take(len(LAVABIN_MAGIC), "magic") != LAVABIN_MAGIC:
        raise MalformedHeader("missing LAVA1 magic")
    n = cur.u32("sample count")
    n_layers = cur.u32("layer count")
    specs = []
    for _ in range(n_layers):
        ln = cur.u32("layer name length")
        try:
            name = cur.take(ln, "layer name").decode("utf-8")
        except UnicodeDecodeError:
            raise MalformedHeader("layer name is not valid UTF-8") from None
        specs.append((name, cur.u32("layer width")))
    labels = np.frombuffer(cur.take(n, "labels"), dtype=np.uint8)
    bad = set(np.unique(labels).tolist()) - {0, 1}
    if bad:
        raise UnknownLabel(f"labels must be 0 or 1, found {sorted(bad)}")
    layers = []
    for name, width in specs:
        raw = cur.take(8 * n * width, f"activations of layer {name!r}")
        m = np.frombuffer(raw, dtype="<f8").reshape(n, width).astype(np.float64)
        layers.append(LayerActivations(name, m))
    if cur.pos == len(buf):
        ids = tuple(f"s{i}" for i in range(n))
    else:
        ids = tuple(cur.take(cur.u32("sample id length"), "sample id").decode("utf-8") for _ in range(n))
        if cur.pos != len(buf):
            raise MalformedHeader(f"{len(buf) - cur.pos} trailing bytes after sample ids")
    return ActivationDataset(tuple(layers), labels.copy(), ids)


def read_lavabin(path: str | Path) -> ActivationDataset:
    return loads_lavabin(Path(path).read_bytes())


def load_activation_dataset(path: str | Path, format: str | None = None) -> ActivationDataset:
    """Load a dataset; ``format`` is ``csv`` or ``lavabin`` (inferred from the magic if omitted)."""
    path = Path(path)
    if format is None:
        with open(path, "rb") as fh:
            format = "lavabin" if fh.read(len(LAVABIN_MAGIC)) == LAVABIN_MAGIC else "csv"
    if format == "csv":
        return read_csv(path)
    if format == "lavabin":
        return read_lavabin(path)
    raise ValueError(f"unknown activation format {format!r}")


def save_activation_dataset(dataset: ActivationDataset, path: str | Path, format: str = "lavabin") -> None:
    if format == "csv":
        write_csv(dataset, path)
    elif format == "lavabin":
        write_lavabin(dataset, path)
    else:
        raise ConfigError(f"unknown activation format {format!r}")


# ---------------------------------------------------------------------------


def validate_dataset(dataset: ActivationDataset) -> ValidationReport:
    counts = Counter(int(v) for v in dataset.labels)
    const = {}
    for la in dataset.layers:
        m = la.matrix
        const[la.layer] = int(np.count_nonzero((m == m[:1]).all(axis=0))) if len(m) else la.width
    return ValidationReport(
        n_samples=dataset.n_samples,
        layer_widths={la.layer: la.width for la in dataset.layers},
        label_counts={0: counts.get(0, 0), 1: counts.get(1, 0)},
        constant_columns=const,
    )


def stack_critical(dataset_per_fold: Sequence[ActivationDataset], critical_sets) -> StackedMatrix:
    """Concatenate critical-neuron activations fold-major, then layer-major, then by rank.

    Each critical set's ``fold`` indexes ``dataset_per_fold`` (``None`` means 0).
    Neurons selected by several folds appear once per fold.
    """
    if not dataset_per_fold:
        raise SampleOrderMismatch("no datasets to stack")
    ref = dataset_per_fold[0]
    for f, ds in enumerate(dataset_per_fold[1:], start=1):
        if ds.sample_ids != ref.sample_ids:
            raise SampleOrderMismatch(f"fold {f} sample ids differ from fold 0 (order or content)")

    layer_pos = {}
    for f, ds in enumerate(dataset_per_fold):
        layer_pos[f] = {name: i for i, name in enumerate(ds.layer_names)}

    keyed = []
    for seq, cs in enumerate(critical_sets):
        f = 0 if cs.fold is None else int(cs.fold)
        if f not in layer_pos:
            raise UnknownNeuron(f"critical set for layer {cs.layer!r} references fold {f}, have {len(dataset_per_fold)}")
        if cs.layer not in layer_pos[f]:
            raise UnknownNeuron(f"layer {cs.layer!r} not present in fold {f}")
        keyed.append((f, layer_pos[f][cs.layer], seq, cs))
    keyed.sort(key=lambda t: t[:3])

    cols, prov = [], []
    for f, _, _, cs in keyed:
        la = dataset_per_fold[f].layer(cs.layer)
        for entry in sorted(cs.neurons, key=lambda e: e.rank):
            nid = entry.neuron
            if nid.layer != cs.layer or not 0 <= nid.index < la.width:
                raise UnknownNeuron(f"neuron {nid} not in layer {cs.layer!r} of width {la.width} (fold {f})")
            cols.append(la.matrix[:, nid.index])
            prov.append((cs.fold, nid))
    n = ref.n_samples
    matrix = np.column_stack(cols) if cols else np.zeros((n, 0))
    return StackedMatrix(_frozen(matrix.astype(np.float64)), tuple(prov), ref.sample_ids)

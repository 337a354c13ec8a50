"""Command-line entry point: ``lava {probe,cluster,morph,score,sanity,synth}``.

Exit codes: 0 success, 1 data problem, 2 usage or configuration problem.
Every run writes ``run.json`` with the resolved configuration; all other
outputs are deterministic for identical inputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .continuum import (
    COGNITIVE_COLUMNS,
    ad_score,
    impute_by_class,
    kde_1d,
    normalize_unit,
    order_clusters,
    read_metric_table,
    two_group_test,
)
from .errors import ConfigError, DataError, LavaError
from .granularity import (
    build_knn_graph,
    cluster_quality,
    complete_graph,
    constrained_ward_hac,
    export_dendrogram,
)
from .morphometrics import measure_one
from .probing.mi import mutual_information_discrete
from .probing.selection import (
    CriticalNeuronSet,
    jaccard_matrix,
    probe_dataset,
    sanity_check,
    worker_count,
)
from .probing.svr import SvrConfig
from .store import load_activation_dataset, stack_critical
from .synthetic import SynthSpec, write_synthetic

log = logging.getLogger("lava")


# -- helpers --------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"input not found: {p}")
    return p


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def read_label_file(path, column: int = 1) -> dict[str, int]:
    """Two-column CSV ``sample_id,<value>`` with a header row."""
    rows = list(csv.reader(_existing(path).read_text().splitlines()))
    if not rows or rows[0][0] != "sample_id":
        raise DataError(f"{path}: expected a header starting with sample_id")
    out = {}
    for r, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            out[row[0]] = int(float(row[column]))
        except (IndexError, ValueError):
            raise DataError(f"{path}:{r}: bad row {row!r}") from None
    return out


def _aligned(mapping: dict[str, int], sample_ids, what: str) -> np.ndarray:
    missing = [s for s in sample_ids if s not in mapping]
    if missing:
        raise DataError(f"{what} has no entry for {len(missing)} samples, e.g. {missing[0]!r}")
    return np.array([mapping[s] for s in sample_ids])


def _config_of(args) -> dict:
    skip = {"func", "log_level"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _write_run(out: Path, args) -> None:
    run = {
        "subcommand": args.command,
        "version": __version__,
        "config": _config_of(args),
        "threads": worker_count(),
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    _write(out / "run.json", _dump(run))


def _svr_config(args) -> SvrConfig:
    return SvrConfig(C=args.c, epsilon=args.epsilon, tol=args.tol)


def _load_folds(paths, fmt):
    return [load_activation_dataset(_existing(p), fmt) for p in paths]


# -- probe ----------------------------------------------------------------

def cmd_probe(args) -> int:
    out = Path(args.out)
    datasets = _load_folds(args.folds, args.format)
    if args.predictions and len(args.predictions) != len(datasets):
        raise ConfigError(f"{len(args.predictions)} prediction files for {len(datasets)} folds")
    cfg = _svr_config(args)
    by_layer: dict[str, list[CriticalNeuronSet]] = {}
    mi_rows = []
    for f, ds in enumerate(datasets):
        if args.predictions:
            y = _aligned(read_label_file(args.predictions[f]), ds.sample_ids, args.predictions[f])
        else:
            y = ds.labels
        sets = probe_dataset(ds, y, cfg, args.p, args.step, fold=f)
        for cs in sets:
            _write(out / f"fold{f}" / f"{cs.layer}.json", cs.to_json() + "\n")
            by_layer.setdefault(cs.layer, []).append(cs)
            col = ds.layer(cs.layer).matrix
            for e in cs.neurons:
                mi = mutual_information_discrete(col[:, e.neuron.index], y, args.bins)
                mi_rows.append([f, cs.layer, e.neuron.index, e.rank, repr(e.score), repr(mi.value_bits)])
        log.info("fold %d: probed %d layers", f, len(sets))
    for layer, sets in by_layer.items():
        J = jaccard_matrix(sets)
        folds = [s.fold for s in sets]
        _write(out / f"jaccard_{layer}.json", _dump({"layer": layer, "folds": folds, "jaccard": J.tolist()}))
        _write(out / f"jaccard_{layer}.csv",
               _csv_text(["fold"] + folds, [[fo] + [repr(float(v)) for v in row] for fo, row in zip(folds, J)]))
    _write(out / "selection_mi.csv", _csv_text(["fold", "layer", "index", "rank", "score", "mi_bits"], mi_rows))
    _write_run(out, args)
    return 0


def read_probe_dir(path) -> list[CriticalNeuronSet]:
    root = _existing(path)
    files = sorted(root.glob("fold*/*.json"))
    if not files:
        raise DataError(f"no selection files under {root}")
    return [CriticalNeuronSet.from_json(p.read_text()) for p in files]


# -- cluster --------------------------------------------------------------

def cmd_cluster(args) -> int:
    out = Path(args.out)
    datasets = _load_folds(args.folds, args.format)
    if args.selections:
        sets = read_probe_dir(args.selections)
        stacked = stack_critical(datasets, sets)
        X, ids = stacked.matrix, stacked.sample_ids
        prov = [[fo, str(n)] for fo, n in stacked.columns]
    else:
        # a single pre-stacked dataset: every column of every layer is used
        if len(datasets) != 1:
            raise ConfigError("without --selections give exactly one pre-stacked dataset")
        ds = datasets[0]
        X = np.hstack([la.matrix for la in ds.layers])
        ids = ds.sample_ids
        prov = [[None, f"{la.layer}:{i}"] for la in ds.layers for i in range(la.width)]
    n = X.shape[0]
    if X.shape[1] == 0:
        raise DataError("stacked matrix has no columns")
    if args.k >= n:
        log.info("constraint inactive (complete graph)")
        graph = complete_graph(n)
    else:
        labels = datasets[0].labels if args.mode == "same_label_only" else None
        graph = build_knn_graph(X, args.k, args.mode, labels)
    tree, assignment = constrained_ward_hac(X, graph, args.clusters)
    _write(out / "dendrogram.json", export_dendrogram(tree, "json", ids) + "\n")
    _write(out / "dendrogram.nwk", export_dendrogram(tree, "newick", ids) + "\n")
    _write(out / "assignment.csv", assignment.to_csv(ids))
    _write(out / "stacked_columns.json", _dump(prov))
    quality = {"n_samples": n, "n_columns": int(X.shape[1]), "forced_merges": len(tree.forced),
               "cluster_sizes": assignment.sizes.tolist()}
    if args.clusters >= 2:
        ref = None
        if args.reference_labels:
            ref = _aligned(read_label_file(args.reference_labels), ids, args.reference_labels)
        quality.update(cluster_quality(X, assignment, ref))
    _write(out / "quality.json", _dump(quality))
    _write_run(out, args)
    return 0


# -- morph ----------------------------------------------------------------

def cmd_morph(args) -> int:
    out = Path(args.out)
    root = _existing(args.input)
    files = sorted(p for p in root.iterdir() if p.is_file())
    if not files:
        log.error("no inputs in %s", root)
        return 1
    rows, failed = [], 0
    for p in files:
        try:
            r = measure_one(p, args.min_box)
        except (LavaError, OSError) as e:
            failed += 1
            log.warning("skipping %s: %s", p.name, e)
            continue
        rows.append([r["sample_id"], repr(r["vessel_density"]), repr(r["fractal_dimension"]), repr(r["r2"])])
    log.info("morphometrics: %d ok, %d failed", len(rows), failed)
    if not rows:
        log.error("every input failed")
        return 1
    _write(out / "morphometrics.csv", _csv_text(["sample_id", "vessel_density", "fractal_dimension", "r2"], rows))
    _write_run(out, args)
    return 0


# -- score ----------------------------------------------------------------

def cmd_score(args) -> int:
    out = Path(args.out)
    metrics_path = _existing(args.metrics)
    sidecar = Path(args.orientations) if args.orientations else metrics_path.with_name(
        metrics_path.name + ".orientation.json")
    if not sidecar.exists():
        raise ConfigError(f"orientation sidecar not found: {sidecar}")
    table = read_metric_table(metrics_path, sidecar)
    clusters = _aligned(read_label_file(args.assignment), table.sample_ids, args.assignment)
    if not args.reference_labels:
        raise ConfigError("--reference-labels is required for class-mean imputation and naming")
    labels = _aligned(read_label_file(args.reference_labels), table.sample_ids, args.reference_labels)
    norm = normalize_unit(impute_by_class(table, labels))
    cols = args.score_columns.split(",") if args.score_columns else list(COGNITIVE_COLUMNS)
    scores = ad_score(norm, cols)
    report = order_clusters(clusters, scores, labels, norm)
    _write(out / "continuum.json", report.to_json() + "\n")

    rows = []
    for name in norm.columns:
        raw = table.values[name]
        for ca, cb in itertools.combinations(report.order, 2):
            a, b = raw[clusters == ca], raw[clusters == cb]
            try:
                stat, p = two_group_test(a, b, "t_test")
                rows.append([name, report.names[ca], report.names[cb], repr(stat), repr(p), ""])
            except LavaError as e:
                rows.append([name, report.names[ca], report.names[cb], "", "", type(e).__name__])
    _write(out / "group_tests.csv", _csv_text(["metric", "group_a", "group_b", "t", "p_value", "note"], rows))

    bw = args.bandwidth if args.bandwidth == "silverman" else float(args.bandwidth)
    curves = {}
    for c in report.order:
        try:
            xs, d = kde_1d(scores[clusters == c], bw, args.grid)
            curves[report.names[c]] = {"x": xs.tolist(), "density": d.tolist()}
        except LavaError as e:
            curves[report.names[c]] = {"error": type(e).__name__}
    _write(out / "score_density.json", _dump(curves))
    _write_run(out, args)
    return 0


# -- sanity ---------------------------------------------------------------

def cmd_sanity(args) -> int:
    out = Path(args.out)
    report = sanity_check(read_probe_dir(args.trained), read_probe_dir(args.randomized), args.threshold)
    print(report.table())
    _write(out / "sanity.json", _dump(report.to_dict()))
    _write_run(out, args)
    return 0


# -- synth ----------------------------------------------------------------

def cmd_synth(args) -> int:
    spec = SynthSpec(
        n_per_subgroup=args.n_per_subgroup,
        subgroups_per_class=args.subgroups_per_class,
        n_layers=args.layers,
        layer_width=args.layer_width,
        n_informative=args.informative,
        noise_sigma=args.noise,
        seed=args.seed,
    )
    write_synthetic(spec, args.out, args.format or "lavabin")
    _write_run(Path(args.out), args)
    return 0


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lava", description="Neuron probing and latent-subclass clustering.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--log-level", default="INFO")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, fmt=True):
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        if fmt:
            p.add_argument("--format", choices=["csv", "lavabin"], default=None,
                           help="activation file format (inferred if omitted)")

    def svr(p):
        p.add_argument("--p", type=int, default=20, help="neurons kept per layer")
        p.add_argument("--step", type=int, default=1000, help="neurons removed per RFE round")
        p.add_argument("--c", type=float, default=1.0)
        p.add_argument("--epsilon", type=float, default=0.1)
        p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("probe", help="SVR-RFE critical neurons per fold and layer")
    p.add_argument("--folds", "--input", action="append", required=True, help="activation file, once per fold")
    p.add_argument("--predictions", action="append", help="sample_id,prediction CSV per fold")
    p.add_argument("--bins", type=int, default=None, help="bins for the MI diagnostic")
    common(p)
    svr(p)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("cluster", help="constrained Ward clustering of stacked critical activations")
    p.add_argument("--folds", "--input", action="append", required=True)
    p.add_argument("--selections", help="output directory of `lava probe`")
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--clusters", type=int, default=7)
    p.add_argument("--mode", choices=["feature_space", "same_label_only"], default="feature_space")
    p.add_argument("--reference-labels")
    common(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("morph", help="vessel density and fractal dimension of a mask directory")
    p.add_argument("--input", required=True)
    p.add_argument("--min-box", type=int, default=16)
    common(p, fmt=False)
    p.set_defaults(func=cmd_morph)

    p = sub.add_parser("score", help="continuum report from clusters and metrics")
    p.add_argument("--assignment", required=True, help="sample_id,cluster CSV")
    p.add_argument("--metrics", required=True, help="metric table CSV")
    p.add_argument("--orientations", help="orientation sidecar JSON")
    p.add_argument("--reference-labels", help="sample_id,label CSV of coarse classes")
    p.add_argument("--score-columns", help="comma-separated score columns")
    p.add_argument("--bandwidth", default="silverman")
    p.add_argument("--grid", type=int, default=512)
    common(p, fmt=False)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sanity", help="compare selections of a trained and a randomized model")
    p.add_argument("--trained", required=True)
    p.add_argument("--randomized", required=True)
    p.add_argument("--threshold", type=float, default=0.1)
    common(p, fmt=False)
    p.set_defaults(func=cmd_sanity)

    p = sub.add_parser("synth", help="write a synthetic dataset with planted subgroups")
    p.add_argument("--n-per-subgroup", type=int, default=20)
    p.add_argument("--subgroups-per-class", type=int, default=3)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--layer-width", type=int, default=256)
    p.add_argument("--informative", type=int, default=3)
    p.add_argument("--noise", type=float, default=1.0)
    common(p)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        log.error("%s", e)
        return 2
    except DataError as e:
        log.error("%s", e)
        return 1
    except FileNotFoundError as e:
        log.error("input not found: %s", e.filename)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""The thirteen acceptance criteria, one test each, at their stated tolerances and time budgets."""
import json
import logging
import time

import numpy as np
from scipy import integrate, stats

from lava.cli import main
from lava.continuum import COGNITIVE_COLUMNS, HIGHER, LOWER, MetricTable, ad_score, normalize_unit, write_metric_table
from lava.granularity import build_knn_graph, cluster_quality, complete_graph, constrained_ward_hac
from lava.morphometrics import VesselMap, fractal_dimension, save_vessel_map, sierpinski_raster, vessel_density
from lava.oracles import oracle_hac_inertia, oracle_svr_qp
from lava.probing.mi import mutual_information_discrete, mutual_information_kde
from lava.probing.selection import probe_dataset, rfe_select, sanity_check
from lava.probing.svr import SvrConfig, kkt_violation, primal_objective, train_epsilon_svr
from lava.store import ActivationDataset, LayerActivations, stack_critical
from lava.synthetic import SynthSpec, generate_synthetic_activations, planted_regression


def test_01_svr_matches_oracle(record):
    rng = np.random.default_rng(1)
    tol = 1e-8
    worst_rel = worst_kkt = 0.0
    failures = 0
    t0 = time.perf_counter()
    for _ in range(50):
        n, m = rng.integers(2, 7), rng.integers(1, 4)
        C, eps = rng.choice([1.0, 10.0, 100.0]), rng.choice([0.0, 0.1, 0.5])
        X, y = rng.normal(size=(n, m)), rng.normal(size=n)
        model = train_epsilon_svr(X, y, SvrConfig(C=C, epsilon=eps, tol=tol, standardize=False))
        f = primal_objective(X, y, model.weights, model.bias, C, eps)
        _, _, f_star = oracle_svr_qp(X, y, C, eps)
        rel = abs(f - f_star) / max(abs(f_star), np.finfo(float).tiny)
        kkt = kkt_violation(model, X, y, C, eps)
        if f_star == 0.0:
            rel = abs(f)
        worst_rel, worst_kkt = max(worst_rel, rel), max(worst_kkt, kkt)
        failures += not (rel <= 1e-4 and kkt <= tol)
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and elapsed < 5
    record(1, ok, f"50 instances, worst rel {worst_rel:.2e}, worst KKT {worst_kkt:.1e}, {elapsed:.2f}s")
    assert ok


def test_02_ward_matches_oracle(record):
    mismatches = 0
    t0 = time.perf_counter()
    for seed in range(100):
        X = np.random.default_rng(seed).normal(size=(8, 4))
        tree, _ = constrained_ward_hac(X, complete_graph(8), 1)
        merges, _ = oracle_hac_inertia(X)
        mismatches += [(l, r) for l, r, _ in merges] != [(m.left, m.right) for m in tree.merges]
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and elapsed < 10
    record(2, ok, f"{100 - mismatches}/100 identical merge sequences, {elapsed:.2f}s")
    assert ok


def _connected_knn(rng, n=30, k=3):
    while True:
        X = rng.normal(size=(n, 5))
        g = build_knn_graph(X, k)
        if g.n_components() == 1:
            return X, g


def test_03_constraint_compliance(record, caplog):
    rng = np.random.default_rng(3)
    violations = forced = 0
    caplog.set_level(logging.WARNING)
    t0 = time.perf_counter()
    for _ in range(100):
        X, g = _connected_knn(rng)
        A = g.adjacency.toarray().astype(bool)
        tree, _ = constrained_ward_hac(X, g, 1)
        members = {i: [i] for i in range(len(X))}
        for node, mg in enumerate(tree.merges, start=len(X)):
            a, b = members.pop(mg.left), members.pop(mg.right)
            violations += not A[np.ix_(a, b)].any()
            members[node] = a + b
        forced += len(tree.forced)
    elapsed = time.perf_counter() - t0
    logged = sum("disconnected" in r.getMessage() for r in caplog.records)
    ok = violations == 0 and forced == 0 and logged == 0 and elapsed < 10
    record(3, ok, f"{violations} non-adjacent merges, {forced + logged} cross-component, {elapsed:.2f}s")
    assert ok


def test_04_knn_sparsity(record):
    rng = np.random.default_rng(4)
    exact = all(
        build_knn_graph(rng.normal(size=(n, 3)), k).directed_sparsity == 1 - k / n
        for n, k in [(200, 5), (50, 1), (37, 7), (10, 10)]
    )
    s = build_knn_graph(rng.normal(size=(200, 8)), 5).directed_sparsity
    ok = exact and s == 0.975
    record(4, ok, f"k=5, N=200 sparsity {s!r}")
    assert ok


def test_05_ensemble_arithmetic(record):
    rng = np.random.default_rng(5)
    n, names = 40, [f"layer{i}" for i in range(1, 8)]
    folds, sets = [], []
    for f in range(5):
        ds = ActivationDataset(
            tuple(LayerActivations(nm, rng.normal(size=(n, 30))) for nm in names),
            np.arange(n) % 2,
            tuple(f"s{i}" for i in range(n)),
        )
        folds.append(ds)
        sets += probe_dataset(ds, n_select=20, step=5, fold=f, workers=1)
    st = stack_critical(folds, sets)
    per_layer = {nm: sum(c[1].layer == nm for c in st.columns) for nm in names}
    ok = st.shape == (n, 700) and set(per_layer.values()) == {100}
    record(5, ok, f"{st.shape[1]} stacked columns, per layer {sorted(set(per_layer.values()))}")
    assert ok


def test_06_end_to_end_recovery(record):
    hits = 0
    t0 = time.perf_counter()
    for seed in range(50):
        ds, truth = generate_synthetic_activations(SynthSpec(seed=seed))
        st = stack_critical([ds], probe_dataset(ds, n_select=3))
        _, assignment = constrained_ward_hac(st.matrix, build_knn_graph(st.matrix, 5), 6)
        hits += cluster_quality(st.matrix, assignment.labels, truth.subgroups)["ami"] >= 0.9
    elapsed = time.perf_counter() - t0
    ok = hits >= 45 and elapsed < 60
    record(6, ok, f"AMI >= 0.9 in {hits}/50 seeds, {elapsed:.2f}s")
    assert ok


def test_07_rfe_planted_recovery(record):
    hits = 0
    t0 = time.perf_counter()
    for seed in range(100):
        X, y, cols = planted_regression(seed)
        picked = {n.neuron.index for n in rfe_select(X, y, n_select=3, step=5).neurons}
        hits += picked == set(cols)
    elapsed = time.perf_counter() - t0
    ok = hits >= 95 and elapsed < 30
    record(7, ok, f"all planted columns in {hits}/100 seeds, {elapsed:.2f}s")
    assert ok


def test_08_fractal_dimension(record):
    t0 = time.perf_counter()
    square = fractal_dimension(VesselMap(np.ones((1024, 1024), bool)))
    line_px = np.zeros((1024, 1024), bool)
    line_px[512] = True
    line = fractal_dimension(VesselMap(line_px))
    tri = fractal_dimension(sierpinski_raster(8))
    elapsed = time.perf_counter() - t0
    ok = (
        1.95 <= square.fitted_dimension <= 2.0 and square.r2 >= 0.99
        and 0.95 <= line.fitted_dimension <= 1.05 and line.r2 >= 0.999
        and abs(tri.fitted_dimension - np.log2(3)) <= 0.1 and tri.r2 >= 0.99
        and elapsed < 5
    )
    record(8, ok, f"square {square.fitted_dimension:.4f}, line {line.fitted_dimension:.4f}, "
                  f"sierpinski {tri.fitted_dimension:.4f}, {elapsed:.2f}s")
    assert ok


def test_09_vessel_density_exact(record):
    rng = np.random.default_rng(9)
    masks = [rng.random((rng.integers(1, 300), rng.integers(1, 300))) < rng.random() for _ in range(1000)]
    t0 = time.perf_counter()
    got = [vessel_density(VesselMap(m)) for m in masks]
    elapsed = time.perf_counter() - t0
    wrong = sum(g != int(np.count_nonzero(m)) / m.size for g, m in zip(got, masks))
    ok = wrong == 0 and elapsed < 2
    record(9, ok, f"{1000 - wrong}/1000 exact, {elapsed:.2f}s")
    assert ok


def _mixture_mi_quadrature():
    p = lambda t: 0.5 * stats.norm.pdf(t) + 0.5 * stats.norm.pdf(t, 4)
    h = -integrate.quad(lambda t: p(t) * np.log2(p(t)), -15, 19, limit=200)[0]
    return h - 0.5 * np.log2(2 * np.pi * np.e)


def test_10_mi_properties(record):
    rng = np.random.default_rng(10)
    t0 = time.perf_counter()
    negative = 0
    for _ in range(1000):
        n = int(rng.integers(4, 200))
        z = rng.normal(size=n).round(int(rng.integers(0, 3)))
        y = rng.integers(0, 2, n)
        negative += mutual_information_discrete(z, y, int(rng.integers(2, min(n, 20) + 1))).value_bits < 0
    y = np.repeat([0, 1], 500)
    ident = mutual_information_discrete(y.astype(float), y, bins=2).value_bits
    null = mutual_information_discrete(rng.normal(size=10_000), rng.integers(0, 2, 10_000)).value_bits
    y = np.repeat([0, 1], 5000)
    kde = mutual_information_kde(rng.normal(4.0 * y, 1.0), y).value_bits
    ref = _mixture_mi_quadrature()
    elapsed = time.perf_counter() - t0
    ok = negative == 0 and abs(ident - 1) <= 1e-9 and null < 0.02 and abs(kde - ref) <= 0.1 and elapsed < 30
    record(10, ok, f"{negative} negative, identical {ident:.12f}, null {null:.4f}, "
                   f"kde {kde:.4f} vs {ref:.4f}, {elapsed:.2f}s")
    assert ok


def test_11_sanity_check(record):
    passes = 0
    t0 = time.perf_counter()
    for seed in range(100):
        ds, _ = generate_synthetic_activations(SynthSpec(seed=seed))
        trained = probe_dataset(ds, n_select=3)
        shuffled = np.random.default_rng(1000 + seed).permutation(ds.labels)
        randomized = probe_dataset(ds, y_hat=shuffled, n_select=3)
        passes += sanity_check(trained, randomized).mean_jaccard < 0.1
    same = sanity_check(trained, trained)
    elapsed = time.perf_counter() - t0
    ok = passes >= 90 and same.mean_jaccard == 1.0 and same.verdict.endswith("FAIL") and elapsed < 60
    record(11, ok, f"mean J < 0.1 in {passes}/100 seeds, identical run J={same.mean_jaccard}, {elapsed:.2f}s")
    assert ok


def test_12_ad_score(record):
    rng = np.random.default_rng(12)
    orient = {"pairs_matching": LOWER, "prospective_memory": HIGHER, "fluid_intelligence": HIGHER}

    def scores(vals):
        table = MetricTable(tuple(f"s{i}" for i in range(len(vals["pairs_matching"]))), vals, orient)
        return ad_score(normalize_unit(table))

    vals = {c: rng.normal(size=30) for c in COGNITIVE_COLUMNS}
    vals["pairs_matching"][0], vals["prospective_memory"][0], vals["fluid_intelligence"][0] = -9, 9, 9
    vals["pairs_matching"][1], vals["prospective_memory"][1], vals["fluid_intelligence"][1] = 9, -9, -9
    s = scores(vals)
    endpoints = s[0] == 0.0 and s[1] == 1.0 and ((s >= 0) & (s <= 1)).all()

    bad = 0
    for _ in range(1000):
        base = rng.uniform(0, 1, size=(int(rng.integers(1, 20)), 3))
        i, j = int(rng.integers(len(base))), int(rng.integers(3))
        better = base.copy()
        better[i, j] = rng.uniform(base[i, j], 1.0)
        a = ad_score(MetricTable(tuple(map(str, range(len(base)))), dict(zip(COGNITIVE_COLUMNS, base.T)),
                                 dict.fromkeys(COGNITIVE_COLUMNS, HIGHER)))
        b = ad_score(MetricTable(tuple(map(str, range(len(base)))), dict(zip(COGNITIVE_COLUMNS, better.T)),
                                 dict.fromkeys(COGNITIVE_COLUMNS, HIGHER)))
        bad += b[i] > a[i]
    ok = endpoints and bad == 0
    record(12, ok, f"healthiest {s[0]}, worst {s[1]}, {bad}/1000 monotonicity violations")
    assert ok


def _tree(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file() and p.name != "run.json"}


def test_13_cli_reproducible(record, tmp_path):
    data = tmp_path / "data"
    assert main(["synth", "--seed", "4", "--out", str(data)]) == 0
    ds = data / "activations.lavabin"
    masks = tmp_path / "masks"
    masks.mkdir()
    save_vessel_map(sierpinski_raster(5, 256), masks / "tri.lmsk")
    save_vessel_map(VesselMap(np.random.default_rng(0).random((200, 300)) < 0.2), masks / "noise.pgm", "pgm")

    rng = np.random.default_rng(13)
    truth = json.loads((data / "ground_truth.json").read_text())
    ids, groups = truth["sample_ids"], truth["subgroups"]
    vals = {c: rng.normal(size=len(ids)) for c in COGNITIVE_COLUMNS}
    write_metric_table(MetricTable(tuple(ids), vals, {"pairs_matching": LOWER, "prospective_memory": HIGHER,
                                                      "fluid_intelligence": HIGHER}), tmp_path / "metrics.csv")
    (tmp_path / "labels.csv").write_text("sample_id,label\n" + "".join(f"{s},{int(g >= 3)}\n" for s, g in zip(ids, groups)))

    def commands(o):
        return {
            "synth": ["synth", "--seed", "4", "--out", f"{o}/synth"],
            "probe": ["probe", "--folds", str(ds), "--p", "3", "--seed", "4", "--out", f"{o}/probe"],
            "cluster": ["cluster", "--folds", str(ds), "--selections", f"{o}/probe", "--clusters", "6",
                        "--out", f"{o}/cluster"],
            "morph": ["morph", "--input", str(masks), "--out", f"{o}/morph"],
            "score": ["score", "--assignment", f"{o}/cluster/assignment.csv", "--metrics", str(tmp_path / "metrics.csv"),
                      "--reference-labels", str(tmp_path / "labels.csv"), "--out", f"{o}/score"],
            "sanity": ["sanity", "--trained", f"{o}/probe", "--randomized", f"{o}/probe", "--out", f"{o}/sanity"],
        }

    differing = []
    t0 = time.perf_counter()
    for run in ("a", "b"):
        for argv in commands(tmp_path / run).values():
            assert main(argv) == 0, argv
    for name in commands(tmp_path / "a"):
        a, b = _tree(tmp_path / "a" / name), _tree(tmp_path / "b" / name)
        if not a or a != b:
            differing.append(name)
    elapsed = time.perf_counter() - t0
    ok = not differing
    record(13, ok, f"6 subcommands byte-identical across runs, differing: {differing or 'none'}, {elapsed:.2f}s")
    assert ok

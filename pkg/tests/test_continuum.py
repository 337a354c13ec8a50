import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lava.continuum import (
    HIGHER,
    LOWER,
    MetricTable,
    ad_score,
    chi_squared_2x2,
    impute_by_class,
    kde_1d,
    normalize_unit,
    order_clusters,
    read_metric_table,
    two_group_test,
    write_metric_table,
)
from lava.errors import (
    AllMissingInClass,
    DegenerateBandwidth,
    DegenerateVariance,
    MalformedHeader,
    MissingColumn,
    SparseCell,
)

COG = {"pairs_matching": LOWER, "prospective_memory": HIGHER, "fluid_intelligence": HIGHER}


def table(values, orientation=None, missing=None):
    n = len(next(iter(values.values())))
    orientation = orientation or {k: HIGHER for k in values}
    return MetricTable(tuple(f"s{i}" for i in range(n)), values, orientation, missing or {})


def test_impute_single_donor():
    t = table({"x": [1.0, 0.0, 3.0]}, missing={"x": [False, True, False]})
    out = impute_by_class(t, [0, 0, 1])
    np.testing.assert_array_equal(out.values["x"], [1.0, 1.0, 3.0])
    assert not out.has_missing()


def test_impute_identity_and_naive():
    t = table({"x": [1.0, 2.0]})
    assert impute_by_class(t, [0, 1]).values["x"].tolist() == [1.0, 2.0]
    rng = np.random.default_rng(0)
    vals = rng.normal(size=40)
    miss = rng.random(40) < 0.3
    lab = rng.integers(0, 2, 40)
    out = impute_by_class(table({"x": vals}, missing={"x": miss}), lab).values["x"]
    for i in range(40):
        if miss[i]:
            donors = [vals[j] for j in range(40) if lab[j] == lab[i] and not miss[j]]
            assert out[i] == pytest.approx(sum(donors) / len(donors))
        else:
            assert out[i] == vals[i]


def test_impute_all_missing_in_class():
    t = table({"x": [1.0, 0.0]}, missing={"x": [False, True]})
    with pytest.raises(AllMissingInClass):
        impute_by_class(t, [0, 1])


def test_normalize_examples():
    t = table({"a": [2.0, 4.0, 6.0], "b": [2.0, 4.0, 6.0], "c": [3.0, 3.0, 3.0]}, {"a": HIGHER, "b": LOWER, "c": LOWER})
    out = normalize_unit(t)
    assert out.values["a"].tolist() == [0, 0.5, 1]
    assert out.values["b"].tolist() == [1, 0.5, 0]
    assert out.values["c"].tolist() == [0.5, 0.5, 0.5]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=20).filter(lambda v: max(v) - min(v) > 1e-3))
def test_normalize_idempotent(vals):
    once = normalize_unit(table({"x": vals}))
    twice = normalize_unit(once)
    np.testing.assert_allclose(twice.values["x"], once.values["x"], atol=1e-12)


def test_ad_score_endpoints():
    best = table({k: [1.0] for k in COG})
    worst = table({k: [0.0] for k in COG})
    assert ad_score(best).tolist() == [0.0]
    assert ad_score(worst).tolist() == [1.0]
    mid = table({"pairs_matching": [1.0], "prospective_memory": [0.5], "fluid_intelligence": [0.0]})
    assert ad_score(mid)[0] == pytest.approx(0.5)
    with pytest.raises(MissingColumn):
        ad_score(table({"x": [1.0]}))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=3, max_size=3), st.integers(0, 2), st.floats(0, 1))
def test_ad_score_monotone(vals, which, bump):
    names = list(COG)
    base = table({k: [v] for k, v in zip(names, vals)})
    raised = list(vals)
    raised[which] = min(1.0, raised[which] + bump)
    up = table({k: [v] for k, v in zip(names, raised)})
    assert ad_score(up)[0] <= ad_score(base)[0] + 1e-15
    assert 0 <= ad_score(base)[0] <= 1


def test_order_clusters_study_shape():
    # clusters 0..6 with scores chosen so ordering differs from ids
    lab = np.repeat(np.arange(7), 3)
    means = {0: 0.9, 1: 0.1, 2: 0.5, 3: 0.3, 4: 0.7, 5: 0.2, 6: 0.8}
    scores = np.array([means[c] for c in lab])
    y = np.array([{0: 1, 1: 0, 2: None, 3: 0, 4: 1, 5: 0, 6: 1}[c] for c in lab], dtype=object)
    y[lab == 2] = [0, 1, 0]
    rep = order_clusters(lab, scores, y.astype(int))
    assert rep.order == [1, 5, 3, 2, 4, 6, 0]
    assert [rep.names[c] for c in rep.order] == ["CN-1", "CN-2", "CN-3", "Mixed", "AD-1", "AD-2", "AD-3"]
    assert sorted(rep.order) == list(range(7))


def test_order_clusters_ties_and_single():
    rep = order_clusters([0, 0, 1, 1], [0.5, 0.5, 0.5, 0.5], [0, 0, 0, 0])
    assert rep.order == [0, 1]
    assert order_clusters([0, 0], [0.1, 0.2], [1, 1]).names == {0: "AD-1"}
    assert order_clusters([0, 0], [0.1, 0.2], [0, 1]).names == {0: "Mixed"}
    multi = order_clusters([0, 0, 1, 1], [0.1, 0.1, 0.2, 0.2], [0, 1, 0, 1])
    assert multi.names == {0: "Mixed-1", 1: "Mixed-2"}


def test_report_json_contains_radar_data():
    t = normalize_unit(table({"a": [1.0, 2.0, 3.0, 4.0]}))
    rep = order_clusters([0, 0, 1, 1], [0.1, 0.2, 0.3, 0.4], [0, 0, 1, 1], t)
    d = json.loads(rep.to_json())
    assert d["clusters"][0]["metric_means"]["a"] == pytest.approx(1 / 6)
    assert d["clusters"][1]["score_min"] == 0.3 and d["clusters"][1]["score_max"] == 0.4
    assert [s["sample_id"] for s in d["samples"]] == ["s0", "s1", "s2", "s3"]


def test_t_test():
    stat, p = two_group_test([1, 2, 3], [1, 2, 3])
    assert stat == 0.0 and p == pytest.approx(1.0, abs=1e-9)
    rng = np.random.default_rng(1)
    a, b = rng.normal(0, 1, 30), rng.normal(5, 1, 30)
    stat, p = two_group_test(a, b)
    assert p < 1e-10
    s2, p2 = two_group_test(b, a)
    assert s2 == -stat and p2 == p
    with pytest.raises(DegenerateVariance):
        two_group_test([1, 1], [2, 2])


def test_t_test_p_value_against_incomplete_beta():
    mpmath = pytest.importorskip("mpmath")
    rng = np.random.default_rng(2)
    a, b = rng.normal(0, 1, 12), rng.normal(0.8, 1.3, 9)
    stat, p = two_group_test(a, b)
    df = len(a) + len(b) - 2
    ref = float(mpmath.betainc(df / 2, 0.5, 0, df / (df + stat**2), regularized=True))
    assert p == pytest.approx(ref, rel=1e-9)


def test_chi_squared():
    assert chi_squared_2x2([[50, 50], [50, 50]]) == (0.0, 1.0)
    stat, p = chi_squared_2x2([[30, 10], [10, 30]])
    ref = stats.chi2_contingency([[30, 10], [10, 30]], correction=False)
    assert stat == pytest.approx(ref.statistic) and p == pytest.approx(ref.pvalue)
    a = [0] * 50 + [1] * 50
    assert two_group_test(a, a, "chi_squared") == (0.0, 1.0)
    with pytest.raises(SparseCell):
        chi_squared_2x2([[0, 5], [0, 5]])


def test_kde_normalized():
    xs, d = kde_1d(np.random.default_rng(3).normal(size=1000))
    assert len(xs) == 512 and (d >= 0).all()
    assert np.trapezoid(d, xs) == pytest.approx(1, abs=0.01)


def test_kde_bimodal_two_peaks():
    rng = np.random.default_rng(4)
    x = np.concatenate([rng.normal(-5, 0.2, 300), rng.normal(5, 0.2, 300)])
    xs, d = kde_1d(x)
    inner = d[1:-1]
    peaks = (inner > d[:-2]) & (inner > d[2:]) & (inner > 0.1 * d.max())
    assert peaks.sum() == 2


def test_kde_repeated_value():
    xs, d = kde_1d(np.full(10, 3.0), bandwidth=0.5, grid=101)
    assert xs[np.argmax(d)] == pytest.approx(3.0)
    np.testing.assert_allclose(d, d[::-1], rtol=1e-12)
    with pytest.raises(DegenerateBandwidth):
        kde_1d(np.full(10, 3.0))


def test_metric_table_csv_round_trip(tmp_path):
    t = MetricTable(("a", "b"), {"pairs_matching": [3.0, 0.0], "x": [0.5, 1.5]},
                    {"pairs_matching": LOWER, "x": HIGHER}, {"pairs_matching": [False, True]})
    p = tmp_path / "m.csv"
    write_metric_table(t, p)
    assert p.read_text().splitlines()[2] == "b,,1.5"
    back = read_metric_table(p)
    assert back.orientation == t.orientation
    assert back.missing["pairs_matching"].tolist() == [False, True]
    assert back.values["x"].tolist() == [0.5, 1.5]


def test_metric_table_requires_orientation(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("sample_id,mystery\na,1\n")
    with pytest.raises(MalformedHeader):
        read_metric_table(p)

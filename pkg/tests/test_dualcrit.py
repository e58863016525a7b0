import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedagg.baselines import simple_average, weighted_mean
from fedagg.data import Dataset, generate_synthetic
from fedagg.dualcrit import (
    DegenerateQualityError,
    LambdaGrid,
    blend,
    dual_weights,
    dualcrit_aggregate,
    normalize_weights,
    quality_factors,
    quantity_factors,
    select_lambda,
)
from fedagg.learner import ClientReport, ModelSpec
from fedagg.params import as_params
from oracles import scalar_pipeline


def reports(values, sizes, scores):
    return [ClientReport(i + 1, as_params(v), s, n) for i, (v, n, s) in enumerate(zip(values, sizes, scores))]


def test_quantity_factor_examples():
    assert quantity_factors([100, 300]) == [0.25, 0.75]
    assert quantity_factors([50, 50, 50]) == [1 / 3] * 3
    v = quantity_factors([272, 217, 397])
    assert v == pytest.approx([272 / 886, 217 / 886, 397 / 886], abs=1e-15)
    assert v == pytest.approx([0.30699, 0.24492, 0.44808], abs=1e-5)


def test_quantity_factor_errors():
    with pytest.raises(ValueError):
        quantity_factors([])
    with pytest.raises(ValueError):
        quantity_factors([3, 0])


def test_quality_factor_examples():
    assert quality_factors([0.8, 0.6]) == pytest.approx([4 / 7, 3 / 7], abs=1e-15)
    assert quality_factors([0.37] * 4) == [0.25] * 4
    assert quality_factors([1.0, 0.0]) == [1.0, 0.0]
    with pytest.raises(DegenerateQualityError):
        quality_factors([0.0, 0.0])


def test_blend_examples():
    q, v = [4 / 7, 3 / 7], [0.25, 0.75]
    assert blend(q, v, 0.0) == v
    assert blend(q, v, 1.0) == q
    assert blend(q, v, 0.5) == pytest.approx([0.410714285714, 0.589285714286], abs=1e-12)
    with pytest.raises(ValueError):
        blend(q, v, 1.1)


def test_normalize_examples():
    f = [0.2, 0.3, 0.5]
    assert normalize_weights(f) == pytest.approx(f, abs=1e-15)
    assert normalize_weights([2, 2]) == [0.5, 0.5]
    assert normalize_weights([1, 3]) == [0.25, 0.75]
    with pytest.raises(ValueError):
        normalize_weights([0, 0])


def test_aggregate_examples():
    rs = reports([[0.0], [1.0]], [100, 300], [0.8, 0.6])
    assert dualcrit_aggregate(rs, 0.5) == pytest.approx([0.589285714286], abs=1e-12)
    rng = np.random.default_rng(0)
    rs = reports(rng.normal(size=(4, 7)).tolist(), [5, 17, 2, 40], [0.9, 0.3, 0.5, 0.7])
    assert dualcrit_aggregate(rs, 0.0).tobytes() == weighted_mean(rs).tobytes()
    eq = reports(rng.normal(size=(3, 7)).tolist(), [20] * 3, [0.61] * 3)
    for lam in (0.0, 0.3, 0.7, 1.0):
        assert dualcrit_aggregate(eq, lam).tobytes() == simple_average(eq).tobytes()


def test_zero_scores_fall_back_to_quantity(caplog):
    with caplog.at_level(logging.WARNING):
        w = dual_weights([1, 3], [0.0, 0.0], 0.8)
    assert w.w == [0.25, 0.75]
    assert "zero" in caplog.text


pipeline_inputs = st.integers(1, 10).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(1, 10_000), min_size=n, max_size=n),
        st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n),
        st.floats(0.0, 1.0),
    )
)


@settings(max_examples=300, deadline=None)
@given(pipeline_inputs)
def test_pipeline_matches_scalar_oracle(case):
    sizes, scores, lam = case
    got = dual_weights(sizes, scores, lam)
    want = scalar_pipeline(sizes, scores, lam)
    for g, w in zip((got.v, got.q, got.f, got.w), want):
        assert np.allclose(g, w, rtol=0, atol=1e-12)
    assert abs(sum(got.w) - 1) <= 1e-12 and min(got.w) >= 0
    assert abs(sum(got.v) - 1) <= 1e-12 and abs(sum(got.q) - 1) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(pipeline_inputs, st.integers(0, 2**32 - 1))
def test_output_lies_in_convex_hull(case, seed):
    sizes, scores, lam = case
    vals = np.random.default_rng(seed).normal(size=(len(sizes), 5))
    out = dualcrit_aggregate(reports(vals.tolist(), sizes, scores), lam)
    tol = 1e-12 * np.abs(vals).max()
    assert np.all(out >= vals.min(axis=0) - tol) and np.all(out <= vals.max(axis=0) + tol)


@settings(max_examples=200, deadline=None)
@given(pipeline_inputs)
def test_lambda_one_uses_quality_only(case):
    sizes, scores, _ = case
    w = dual_weights(sizes, scores, 1.0)
    assert w.f == w.q
    assert np.allclose(w.w, w.q, rtol=0, atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(pipeline_inputs, st.floats(0.01, 100.0))
def test_quality_is_scale_free(case, c):
    sizes, scores, lam = case
    base = dual_weights(sizes, scores, lam)
    scaled = dual_weights(sizes, [s * c for s in scores], lam)
    for a, b in ((base.q, scaled.q), (base.f, scaled.f), (base.w, scaled.w)):
        assert np.allclose(a, b, rtol=0, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 1000), st.integers(1, 1000), st.floats(0.01, 1.0), st.floats(0.01, 1.0),
       st.floats(0.0, 1.0), st.floats(0.001, 1.0))
def test_weight_monotone_in_own_score(n1, n2, s1, s2, bump, lam):
    lower = dual_weights([n1, n2], [s1, s2], lam).w[0]
    higher = dual_weights([n1, n2], [s1 + bump, s2], lam).w[0]
    assert higher >= lower


def _val_set():
    return generate_synthetic(60, 2, 2, seed=5)


def test_select_lambda_singleton_grid():
    spec = ModelSpec(2, 2)
    rng = np.random.default_rng(1)
    rs = reports(rng.normal(size=(3, spec.num_params)).tolist(), [10, 20, 30], [0.9, 0.5, 0.7])
    lam, model = select_lambda(rs, [0.5], _val_set(), spec)
    assert lam == 0.5
    assert model.tobytes() == dualcrit_aggregate(rs, 0.5).tobytes()


def test_select_lambda_ties_go_to_smallest():
    spec = ModelSpec(2, 2)
    p = np.random.default_rng(2).normal(size=spec.num_params).tolist()
    rs = reports([p, p, p], [10, 20, 30], [0.9, 0.5, 0.7])
    lam, _ = select_lambda(rs, LambdaGrid(), _val_set(), spec)
    assert lam == 0.0


def test_select_lambda_returns_grid_member_and_its_model():
    spec = ModelSpec(2, 2)
    rng = np.random.default_rng(3)
    val = _val_set()
    for trial in range(10):
        rs = reports(rng.normal(size=(4, spec.num_params)).tolist(), [10, 40, 30, 5], rng.uniform(0.1, 1, 4).tolist())
        grid = LambdaGrid()
        lam, model = select_lambda(rs, grid, val, spec)
        assert lam in grid.values and grid.chosen == lam
        assert model.tobytes() == dualcrit_aggregate(rs, lam).tobytes()


def test_select_lambda_picks_best_validation_accuracy():
    spec = ModelSpec(2, 2)
    # Client 1 separates the classes, client 2 inverts them; only quality weighting helps.
    good = [-1.0, 1.0, 0.0, 0.0, 0.0, 0.0]
    bad = [1.0, -1.0, 0.0, 0.0, 0.0, 0.0]
    x = np.array([[1.0, 0.0], [-1.0, 0.0], [2.0, 1.0], [-2.0, -1.0]])
    val = Dataset(x, np.array([1, 0, 1, 0]), np.arange(4))
    rs = reports([good, bad], [100, 300], [1.0, 0.1])
    # lam=0 gives the bad client weight 0.75 (accuracy 0); lam=0.5 and lam=1 both
    # favour the good client (accuracy 1), and the tie goes to 0.5.
    lam, _ = select_lambda(rs, [0.0, 0.5, 1.0], val, spec)
    assert lam == 0.5


@pytest.mark.parametrize("values", [(), (0.5, 0.2), (0.0, 0.0), (-0.1, 0.5), (0.5, 1.2)])
def test_lambda_grid_validation(values):
    with pytest.raises(ValueError):
        LambdaGrid(values)

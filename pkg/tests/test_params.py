import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedagg.params import (
    MAGIC,
    StructureError,
    add,
    as_params,
    load_checkpoint,
    save_checkpoint,
    scale,
    weighted_sum,
    zeros,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def vectors(length):
    return st.lists(finite, min_size=length, max_size=length).map(as_params)


def test_scale_examples():
    assert scale(as_params([1.0, -2.0]), 0.5).tolist() == [0.5, -1.0]
    p = as_params([0.1, -3.3, 7e-9])
    assert scale(p, 1.0).tobytes() == p.tobytes()
    assert scale(p, 0.0).tolist() == [0.0, 0.0, 0.0]


@pytest.mark.parametrize("c", [float("nan"), float("inf"), -float("inf")])
def test_scale_rejects_non_finite_factor(c):
    with pytest.raises(ValueError):
        scale(as_params([1.0]), c)


def test_add_examples():
    assert add(as_params([1.0]), as_params([2.0])).tolist() == [3.0]
    p = as_params([4.0, -1.5])
    assert add(p, zeros(2)).tolist() == p.tolist()
    assert add(as_params([1.0, 2.0]), as_params([0.5, -2.0])).tolist() == [1.5, 0.0]


def test_add_length_mismatch_names_both_lengths():
    with pytest.raises(StructureError, match="2 vs 3"):
        add(zeros(2), zeros(3))


def test_weighted_sum_examples():
    assert weighted_sum([as_params([2.0]), as_params([4.0])], [0.5, 0.5]).tolist() == [3.0]
    p = as_params([1.25, -8.0])
    assert weighted_sum([p], [1.0]).tobytes() == p.tobytes()
    ps = [as_params([1, 0]), as_params([0, 1]), as_params([1, 1])]
    ws = [0.2, 0.3, 0.5]
    expected = [sum(w * v[j] for w, v in zip(ws, [[1, 0], [0, 1], [1, 1]])) for j in range(2)]
    assert weighted_sum(ps, ws) == pytest.approx(expected, abs=1e-15)
    assert expected == pytest.approx([0.7, 0.8])


def test_weighted_sum_errors():
    with pytest.raises(ValueError):
        weighted_sum([], [])
    with pytest.raises(StructureError):
        weighted_sum([zeros(2), zeros(3)], [0.5, 0.5])
    with pytest.raises(StructureError):
        weighted_sum([zeros(2)], [0.5, 0.5])
    with pytest.raises(ValueError):
        weighted_sum([zeros(2)], [float("nan")])


def test_vectors_are_read_only():
    p = as_params([1.0, 2.0])
    with pytest.raises(ValueError):
        p[0] = 5.0
    assert not add(p, p).flags.writeable


def test_as_params_rejects_bad_input():
    with pytest.raises(StructureError):
        as_params([])
    with pytest.raises(ValueError):
        as_params([1.0, float("nan")])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6).flatmap(lambda n: st.tuples(
    st.lists(vectors(3), min_size=n, max_size=n),
    st.lists(st.floats(0, 1), min_size=n, max_size=n),
    st.permutations(range(n)),
)))
def test_weighted_sum_permutation_invariant_with_keys(case):
    ps, ws, perm = case
    keys = list(range(len(ps)))
    base = weighted_sum(ps, ws, keys)
    shuffled = weighted_sum([ps[i] for i in perm], [ws[i] for i in perm], [keys[i] for i in perm])
    assert shuffled.tobytes() == base.tobytes()


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: st.lists(vectors(4), min_size=n, max_size=n)))
def test_uniform_weighted_sum_matches_mean(ps):
    n = len(ps)
    got = weighted_sum(ps, [1.0 / n] * n)
    want = np.mean(np.stack(ps), axis=0)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(want).max()))


@settings(max_examples=50, deadline=None)
@given(vectors(5), vectors(5), st.floats(-100, 100))
def test_scale_distributes_over_add(a, b, c):
    left = scale(add(a, b), c)
    right = add(scale(a, c), scale(b, c))
    np.testing.assert_allclose(left, right, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(left).max()))


def test_checkpoint_layout_and_round_trip(tmp_path):
    p = as_params([1.0, -0.1, 3.141592653589793, 1e-300])
    path = tmp_path / "m.fagg"
    save_checkpoint(path, p)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert raw[4] == 1
    assert struct.unpack("<Q", raw[5:13])[0] == 4
    assert struct.unpack("<4d", raw[13:]) == tuple(p)
    assert load_checkpoint(path).tobytes() == p.tobytes()


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
def test_checkpoint_round_trip_is_bit_exact(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("ck") / "p.fagg"
    p = as_params(values)
    save_checkpoint(path, p)
    assert load_checkpoint(path).tobytes() == p.tobytes()


def test_checkpoint_rejects_corruption(tmp_path):
    path = tmp_path / "bad.fagg"
    save_checkpoint(path, as_params([1.0, 2.0]))
    raw = path.read_bytes()
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(StructureError, match="magic"):
        load_checkpoint(path)
    path.write_bytes(raw[:-8])
    with pytest.raises(StructureError, match="declares 2"):
        load_checkpoint(path)
    path.write_bytes(raw[:4] + b"\x07" + raw[5:])
    with pytest.raises(StructureError, match="version"):
        load_checkpoint(path)

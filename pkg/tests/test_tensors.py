import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scsa.errors import DataError, EmptyCorrespondenceError, ShapeMismatchError
from scsa.tensors import FeatureMap, load_feature_map, matmul, row_softmax, save_feature_map, slice_stats

from conftest import random_features

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def test_matmul_identity():
    np.testing.assert_array_equal(matmul([[1, 0], [0, 1]], [[3, 4], [5, 6]]), [[3, 4], [5, 6]])


def test_matmul_dot():
    np.testing.assert_array_equal(matmul([[1, 2]], [[3], [4]]), [[11]])


def test_matmul_matches_triple_loop(rng):
    a, b = rng.standard_normal((5, 7)), rng.standard_normal((7, 3))
    expected = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(7):
                expected[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(matmul(a, b), expected, atol=1e-9, rtol=0)


def test_matmul_mismatch_names_shapes():
    with pytest.raises(ShapeMismatchError) as exc:
        matmul(np.ones((2, 3)), np.ones((4, 2)))
    assert "(2, 3)" in str(exc.value) and "(4, 2)" in str(exc.value)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite))
def test_matmul_right_identity_bitwise(a):
    a = a + 0.0  # drop negative zeros, which x*1 + 0 legitimately turns positive
    np.testing.assert_array_equal(matmul(a, np.eye(a.shape[1])), a)


def test_softmax_symmetric_row():
    np.testing.assert_array_equal(row_softmax([[0.0, 0.0]]), [[0.5, 0.5]])


def test_softmax_single_finite_entry():
    out = row_softmax([[-np.inf, 3.0, -np.inf]])
    np.testing.assert_array_equal(out, [[0.0, 1.0, 0.0]])


def test_softmax_matches_direct_formula():
    z = sum(math.exp(v) for v in (1, 2, 3))
    expected = [math.exp(v) / z for v in (1, 2, 3)]
    np.testing.assert_allclose(row_softmax([[1.0, 2.0, 3.0]])[0], expected, atol=1e-9, rtol=0)


def test_softmax_empty_row_raises():
    with pytest.raises(EmptyCorrespondenceError, match="empty semantic correspondence"):
        row_softmax([[1.0, 2.0], [-np.inf, -np.inf]])


def test_softmax_rejects_nan():
    with pytest.raises(DataError):
        row_softmax([[np.nan, 1.0]])


@settings(max_examples=200)
@given(
    arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 8)), elements=finite),
    st.data(),
)
def test_softmax_properties(m, data):
    mask = data.draw(arrays(np.bool_, m.shape))
    mask[:, 0] |= ~mask.any(axis=1)  # at least one finite entry per row
    m = np.where(mask, m, -np.inf)
    out = row_softmax(m)
    np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(out[~mask] == 0.0)
    assert np.all((out >= 0) & (out <= 1))


def test_slice_stats_two_cells():
    f = FeatureMap(np.array([[[1.0, 3.0]]]))
    mean, std = slice_stats(f, np.array([[True, True]]))
    assert mean[0] == 2.0 and std[0] == 1.0


def test_slice_stats_single_cell_zero_std(rng):
    f = random_features(rng, 3, 2, 2)
    _, std = slice_stats(f, [2])
    np.testing.assert_array_equal(std, 0.0)


def test_slice_stats_two_pass_oracle(rng):
    f = random_features(rng, 2, 2, 2)
    cells = [0, 1, 2, 3]
    mean, std = slice_stats(f, cells)
    for c in range(2):
        vals = [f.data[c].reshape(-1)[i] for i in cells]
        m = sum(vals) / len(vals)
        var = sum((v - m) ** 2 for v in vals) / len(vals)
        assert abs(mean[c] - m) < 1e-9
        assert abs(std[c] - math.sqrt(var)) < 1e-9


def test_slice_stats_full_extent_is_whole_map(rng):
    f = random_features(rng, 4, 3, 5)
    mean, std = slice_stats(f, np.ones((3, 5), bool))
    np.testing.assert_allclose(mean, f.data.reshape(4, -1).mean(axis=1), atol=1e-12)
    np.testing.assert_allclose(std, f.data.reshape(4, -1).std(axis=1), atol=1e-12)


def test_slice_stats_empty_raises(rng):
    with pytest.raises(DataError):
        slice_stats(random_features(rng, 1, 2, 2), np.zeros((2, 2), bool))


def test_feature_map_rejects_nonfinite():
    with pytest.raises(DataError):
        FeatureMap(np.array([[[np.inf]]]))


def test_feature_map_cells_roundtrip(rng):
    f = random_features(rng, 3, 4, 5)
    assert f.cells().shape == (20, 3)
    np.testing.assert_array_equal(FeatureMap.from_cells(f.cells(), 4, 5).data, f.data)
    # cell index = row * width + col
    np.testing.assert_array_equal(f.cells()[1 * 5 + 2], f.data[:, 1, 2])


def test_scsaf1_roundtrip(tmp_path, rng):
    f = random_features(rng, 3, 4, 5)
    path = tmp_path / "f.scsaf"
    save_feature_map(path, f)
    raw = path.read_bytes()
    assert raw[:6] == b"SCSAF1"
    assert np.frombuffer(raw[6:18], "<u4").tolist() == [3, 4, 5]
    assert len(raw) == 18 + 3 * 4 * 5 * 4
    back = load_feature_map(path)
    np.testing.assert_array_equal(back.data, f.data.astype(np.float32))


@pytest.mark.parametrize("payload", [b"", b"XXXXXX" + b"\0" * 12, b"SCSAF1" + np.array([1, 1, 2], "<u4").tobytes()])
def test_scsaf1_malformed(tmp_path, payload):
    path = tmp_path / "bad.scsaf"
    path.write_bytes(payload)
    with pytest.raises(DataError):
        load_feature_map(path)

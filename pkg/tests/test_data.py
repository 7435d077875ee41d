import numpy as np
import pytest

from localprop.data import (DataError, Dataset, gen_parity_sequences, gen_two_moons, gen_xor,
                            load_csv, one_hot, read_csv_matrix, standardize)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_xor_csv(tmp_path):
    p = write(tmp_path, "xor.csv", "a,b,y\n0,0,0\n0,1,1\n1,0,1\n1,1,0\n")
    ds = load_csv(p, [0, 1], [2])
    assert len(ds) == 4 and ds.input_width == 2 and ds.target_width == 1
    assert ds.targets[:, 0].tolist() == [0, 1, 1, 0]


def test_headerless_and_blank_lines(tmp_path):
    p = write(tmp_path, "m.csv", "1,2\n\n3,4\n")
    assert read_csv_matrix(p).tolist() == [[1, 2], [3, 4]]


def test_one_hot():
    assert one_hot([1], 3).tolist() == [[0, 1, 0]]
    with pytest.raises(DataError):
        one_hot([3], 3)
    with pytest.raises(DataError):
        one_hot([0.5], 3)


def test_one_hot_csv(tmp_path):
    p = write(tmp_path, "c.csv", "0.5,2\n0.1,0\n")
    ds = load_csv(p, [0], [1], one_hot_classes=3)
    assert ds.targets.tolist() == [[0, 0, 1], [1, 0, 0]]


def test_ragged_row_is_named(tmp_path):
    p = write(tmp_path, "r.csv", "x,y\n1,2\n3\n")
    with pytest.raises(DataError, match="line 3"):
        read_csv_matrix(p)


def test_non_numeric_cell_is_located(tmp_path):
    p = write(tmp_path, "n.csv", "1,2\n3,abc\n")
    with pytest.raises(DataError, match="line 2, column 2"):
        read_csv_matrix(p)


def test_bad_columns_and_empty(tmp_path):
    p = write(tmp_path, "x.csv", "1,2\n")
    with pytest.raises(DataError):
        load_csv(p, [0], [5])
    e = write(tmp_path, "e.csv", "a,b\n")
    ds = load_csv(e, [0], [1])
    assert len(ds) == 0 and ds.inputs.shape == (0, 1)


def test_gen_xor():
    ds = gen_xor()
    assert ds.inputs.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    assert ds.targets[:, 0].tolist() == [0, 1, 1, 0]


def test_parity_is_reproducible():
    a, b = gen_parity_sequences(20, 4, seed=3), gen_parity_sequences(20, 4, seed=3)
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.targets, b.targets)
    assert a.inputs.shape == (20, 4, 1) and a.targets.shape == (20, 1)
    assert np.array_equal(a.targets[:, 0], a.inputs[:, :, 0].sum(axis=1) % 2)
    per = gen_parity_sequences(20, 4, seed=3, per_step=True)
    assert per.targets.shape == (20, 4, 1)
    assert np.array_equal(per.targets[:, -1], a.targets)


def test_two_moons_noise_free_points_lie_on_arcs():
    ds = gen_two_moons(50, 0.0, seed=1)
    X, y = ds.inputs, ds.targets[:, 0]
    upper, lower = X[y == 0], X[y == 1]
    np.testing.assert_allclose(np.hypot(upper[:, 0], upper[:, 1]), 1.0, atol=1e-14)
    assert np.all(upper[:, 1] >= -1e-15)
    np.testing.assert_allclose(np.hypot(lower[:, 0] - 1.0, lower[:, 1] - 0.5), 1.0, atol=1e-14)
    assert np.all(lower[:, 1] <= 0.5 + 1e-15)
    assert len(upper) == 25 and len(lower) == 25


def test_standardize():
    ds = standardize(Dataset([[1.0, 5.0], [3.0, 5.0]], [[0.0], [1.0]]))
    assert ds.inputs.tolist() == [[-1.0, 0.0], [1.0, 0.0]]


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 2)), np.zeros((2, 1)))
    with pytest.raises(DataError):
        gen_two_moons(0)

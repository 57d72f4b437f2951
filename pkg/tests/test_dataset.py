import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lmvsc.dataset import (LabelVector, MultiViewDataset, NoiseSpec, ViewMatrix, add_noise,
                           load_labels, load_multiview, load_view, load_view_csv, standardize,
                           synth_multiview, write_dataset, write_view_csv, write_view_mtx)
from lmvsc.errors import DimensionMismatch, ParseError


def _write(path, text):
    path.write_text(text)
    return path


def test_csv_zeros(tmp_path):
    p = _write(tmp_path / "z.csv", "0,0\n0,0\n0,0\n")
    v = load_view_csv(p)
    assert v.data.shape == (2, 3)
    assert np.all(v.data == 0)


def test_csv_transposes_rows_to_columns(tmp_path):
    v = load_view_csv(_write(tmp_path / "a.csv", "1,2\n3,4"))
    np.testing.assert_array_equal(v.data[:, 0], [1, 2])
    np.testing.assert_array_equal(v.data[:, 1], [3, 4])


def test_csv_header_skipped(tmp_path):
    v = load_view_csv(_write(tmp_path / "h.csv", "f1,f2\n1,2\n"), has_header=True)
    assert v.data.shape == (2, 1)


@pytest.mark.parametrize("text, exc", [
    ("1,2\nabc,4\n", ParseError),
    ("1,2\n3\n", ParseError),
    ("1,nan\n3,4\n", ValueError),
    ("1,inf\n3,4\n", ValueError),
])
def test_csv_errors(tmp_path, text, exc):
    with pytest.raises(exc):
        load_view_csv(_write(tmp_path / "bad.csv", text))


def test_missing_file(tmp_path):
    with pytest.raises(OSError):
        load_view_csv(tmp_path / "nope.csv")


def test_pixel_scale(tmp_path):
    v = load_view_csv(_write(tmp_path / "p.csv", "0,255\n51,102\n"), pixel_scale=True)
    np.testing.assert_allclose(v.data, [[0, 0.2], [1, 0.4]])


def test_manifest_single_view(tmp_path):
    _write(tmp_path / "v.csv", "".join(f"{i},{i * 2}\n" for i in range(5)))
    _write(tmp_path / "y.txt", "0\n1\n0\n1\n2\n")
    m = _write(tmp_path / "m.txt", "# demo\nview = v.csv\nlabels = y.txt\n")
    data = load_multiview(m)
    assert data.v == 1 and data.n == 5
    assert data.labels.k_true == 3


def test_manifest_mismatched_views(tmp_path):
    _write(tmp_path / "a.csv", "1\n2\n3\n4\n5\n")
    _write(tmp_path / "b.csv", "1\n2\n3\n4\n5\n6\n")
    m = _write(tmp_path / "m.txt", "view = a.csv\nview = b.csv\n")
    with pytest.raises(DimensionMismatch):
        load_multiview(m)


def test_manifest_without_labels(tmp_path):
    _write(tmp_path / "a.csv", "1\n2\n")
    data = load_multiview(_write(tmp_path / "m.txt", "view = a.csv\n"))
    assert data.labels is None


def test_manifest_bad_key(tmp_path):
    with pytest.raises(ParseError):
        load_multiview(_write(tmp_path / "m.txt", "viwe = a.csv\n"))


def test_labels_remapped(tmp_path):
    lab = load_labels(_write(tmp_path / "y.txt", "5\n3\n5\n9\n"))
    np.testing.assert_array_equal(lab.labels, [1, 0, 1, 2])


def test_label_vector_rejects_gaps():
    with pytest.raises(ValueError):
        LabelVector(np.array([0, 2, 2]))


def test_roundtrip_csv_and_mtx(tmp_path, rng):
    data, _ = synth_multiview(30, 3, 2, dims=[5, 7], subspace_dim=2, seed=3)
    for fmt in ("csv", "mtx"):
        manifest = write_dataset(data, tmp_path / fmt, fmt=fmt)
        back = load_multiview(manifest)
        for a, b in zip(data.views, back.views):
            np.testing.assert_array_equal(a.data, b.data)
        np.testing.assert_array_equal(back.labels.labels, data.labels.labels)


def test_single_view_writers(tmp_path, rng):
    v = ViewMatrix(rng.standard_normal((4, 9)))
    write_view_csv(v, tmp_path / "v.csv")
    write_view_mtx(v, tmp_path / "v.mtx")
    np.testing.assert_array_equal(load_view(tmp_path / "v.csv").data, v.data)
    np.testing.assert_array_equal(load_view(tmp_path / "v.mtx").data, v.data)


def test_standardize_none_is_identity(rng):
    v = ViewMatrix(rng.standard_normal((3, 4)))
    assert standardize(v, "none") is v


def test_zscore_example():
    out = standardize(ViewMatrix(np.array([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]])), "zscore").data
    s = np.sqrt(1.5)  # 1 / population std of (1, 2, 3)
    np.testing.assert_allclose(out[0], [-s, 0.0, s], atol=1e-12)
    np.testing.assert_array_equal(out[1], [0.0, 0.0, 0.0])


def test_unit_range():
    out = standardize(ViewMatrix(np.array([[2.0, 4.0, 3.0], [1.0, 1.0, 1.0]])), "unit_range").data
    np.testing.assert_allclose(out, [[0, 1, 0.5], [0, 0, 0]])


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (4, 6), elements=st.floats(-1e3, 1e3)))
def test_zscore_properties(x):
    out = standardize(ViewMatrix(x), "zscore").data
    np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-9)
    sd = x.std(axis=1)
    for i in range(4):
        if sd[i] > 1e-6 * max(1.0, np.abs(x[i]).max()):
            assert out[i].std() == pytest.approx(1.0, rel=1e-6)


def _residual_to_span(points, dim):
    u, _, _ = np.linalg.svd(points, full_matrices=False)
    basis = u[:, :dim]
    return np.linalg.norm(points - basis @ (basis.T @ points))


def test_synth_single_noiseless_subspace():
    data, lab = synth_multiview(10, 1, 1, dims=[6], subspace_dim=2, noise_sigma=0.0, seed=1)
    assert _residual_to_span(data.views[0].data, 2) <= 1e-10


def test_synth_clusters_lie_in_subspaces():
    data, lab = synth_multiview(60, 3, 2, dims=[8, 9], subspace_dim=2, noise_sigma=0.0, seed=2)
    for view in data.views:
        for c in range(3):
            assert _residual_to_span(view.data[:, lab.labels == c], 2) <= 1e-10


def test_synth_deterministic():
    a, _ = synth_multiview(50, 4, 2, subspace_dim=3, seed=11)
    b, _ = synth_multiview(50, 4, 2, subspace_dim=3, seed=11)
    for x, y in zip(a.views, b.views):
        assert np.array_equal(x.data, y.data)
    c, _ = synth_multiview(50, 4, 2, subspace_dim=3, seed=12)
    assert not np.array_equal(a.views[0].data, c.views[0].data)


def test_synth_balanced_labels():
    _, lab = synth_multiview(200, 4, 1, seed=0)
    assert np.all(np.bincount(lab.labels) == 50)


@pytest.mark.parametrize("kwargs", [
    dict(n=3, k=4), dict(n=10, k=2, subspace_dim=0), dict(n=10, k=2, dims=[2], v=1, subspace_dim=3),
])
def test_synth_preconditions(kwargs):
    with pytest.raises(ValueError):
        synth_multiview(**kwargs)


def test_gaussian_vanishing_noise(rng):
    v = ViewMatrix(rng.random((20, 30)))
    out = add_noise(v, NoiseSpec("gaussian", 1e-12, seed=4))
    assert np.max(np.abs(out.data - v.data)) <= 1e-5


def test_salt_pepper_count():
    v = ViewMatrix(np.full((100, 100), 0.5))
    out = add_noise(v, NoiseSpec("salt_pepper", 0.2, seed=7)).data
    hits = np.sum((out == 0.0) | (out == 1.0))
    mean, sd = 10000 * 0.2, np.sqrt(10000 * 0.2 * 0.8)
    assert abs(hits - mean) <= 4 * sd
    # salt and pepper in roughly equal shares
    assert abs(np.sum(out == 1.0) - hits / 2) <= 4 * np.sqrt(hits / 4)


def test_speckle_fixes_zero():
    out = add_noise(ViewMatrix(np.zeros((5, 5))), NoiseSpec("speckle", 0.1, seed=1))
    assert np.all(out.data == 0)


def test_noise_clamped_and_deterministic(rng):
    v = ViewMatrix(rng.random((10, 10)))
    for kind, level in (("speckle", 0.15), ("salt_pepper", 0.1)):
        a = add_noise(v, NoiseSpec(kind, level, seed=5)).data
        b = add_noise(v, NoiseSpec(kind, level, seed=5)).data
        assert np.array_equal(a, b)
        assert a.min() >= 0 and a.max() <= 1


@pytest.mark.parametrize("kind, level", [
    ("gaussian", 0.0), ("speckle", -1.0), ("salt_pepper", 1.0), ("salt_pepper", 0.0), ("blur", 0.1)])
def test_noise_spec_validation(kind, level):
    with pytest.raises(ValueError):
        NoiseSpec(kind, level)


@pytest.mark.parametrize("kind, levels", [
    ("gaussian", (0.01, 0.03, 0.05)),
    ("salt_pepper", (0.05, 0.1, 0.2)),
    ("speckle", (0.05, 0.1, 0.15)),
])
def test_robustness_noise_levels_accepted(kind, levels):
    for lvl in levels:
        NoiseSpec(kind, lvl, seed=0)


def test_dataset_label_length_checked():
    v = ViewMatrix(np.zeros((2, 4)))
    with pytest.raises(DimensionMismatch):
        MultiViewDataset((v,), LabelVector(np.array([0, 1, 0])))


def test_views_are_immutable():
    v = ViewMatrix(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        v.data[0, 0] = 1.0

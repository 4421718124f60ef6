import gzip
import struct

import numpy as np
import pytest

from smdlab.data import generate_synthetic, load_idx_subset
from smdlab.errors import ConfigError, DataError, FormatError
from smdlab.models import LinearModel, MLP, residuals


def idx_bytes(pixels, labels, rows=2, cols=2):
    n = len(labels)
    img = struct.pack(">IIII", 0x803, n, rows, cols) + bytes(pixels)
    lab = struct.pack(">II", 0x801, n) + bytes(labels)
    return img, lab


@pytest.fixture
def idx_files(tmp_path):
    # 4 samples of 2x2 pixels, labels 7,1,7,3
    pixels = [0, 255, 128, 64, 10, 20, 30, 40, 255, 255, 0, 0, 1, 2, 3, 4]
    img, lab = idx_bytes(pixels, [7, 1, 7, 3])
    ip = tmp_path / "images.idx"
    lp = tmp_path / "labels.idx"
    ip.write_bytes(img)
    lp.write_bytes(lab)
    return ip, lp


class TestSynthetic:
    def test_deterministic(self):
        model = MLP((4, 6, 1))
        a, ta = generate_synthetic(model, 5, seed=3, n_test=7)
        b, tb = generate_synthetic(model, 5, seed=3, n_test=7)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)
        assert np.array_equal(ta, tb)
        assert np.array_equal(a.X_test, b.X_test)

    def test_teacher_interpolates_and_matches_linear_labels(self):
        model = LinearModel(20)
        data, teacher = generate_synthetic(model, 10, seed=4)
        np.testing.assert_array_equal(data.y, data.X @ teacher)
        assert np.max(np.abs(residuals(model, teacher, data))) == 0.0

    def test_overparameterized_required(self):
        with pytest.raises(ConfigError):
            generate_synthetic(LinearModel(5), 5, seed=0)

    def test_output_scale_scales_labels_exactly(self):
        model = MLP((4, 6, 1))
        base, teacher = generate_synthetic(model, 5, seed=9)
        scaled, teacher_s = generate_synthetic(model, 5, seed=9, teacher_output_scale=0.25)
        np.testing.assert_allclose(scaled.y, 0.25 * base.y, rtol=1e-12)
        assert np.max(np.abs(residuals(model, teacher_s, scaled))) <= 1e-15

    def test_noise_applied_to_train_only(self):
        model = LinearModel(20)
        clean, t = generate_synthetic(model, 5, seed=5, n_test=6)
        noisy, t2 = generate_synthetic(model, 5, seed=5, n_test=6, noise=0.1)
        assert not np.array_equal(clean.y, noisy.y)
        np.testing.assert_array_equal(clean.y_test, noisy.y_test)


class TestIdxLoader:
    def test_exact_pixel_values_and_labels(self, idx_files):
        ip, lp = idx_files
        data = load_idx_subset(ip, lp, 3, (7, 1))
        assert data.X.shape == (3, 4)
        np.testing.assert_array_equal(data.X[0], np.array([0, 255, 128, 64]) / 255.0)
        np.testing.assert_array_equal(data.X[1], np.array([10, 20, 30, 40]) / 255.0)
        np.testing.assert_array_equal(data.X[2], np.array([255, 255, 0, 0]) / 255.0)
        np.testing.assert_array_equal(data.y, [-1.0, 1.0, -1.0])

    def test_count_truncation(self, idx_files):
        ip, lp = idx_files
        data = load_idx_subset(ip, lp, 2, (7, 1))
        assert data.n == 2
        np.testing.assert_array_equal(data.y, [-1.0, 1.0])

    def test_empty_request_rejected(self, idx_files):
        ip, lp = idx_files
        with pytest.raises(DataError):
            load_idx_subset(ip, lp, 0, (7, 1))

    def test_missing_class_rejected(self, idx_files):
        ip, lp = idx_files
        with pytest.raises(DataError):
            load_idx_subset(ip, lp, 1, (8, 9))
        with pytest.raises(DataError):
            load_idx_subset(ip, lp, 4, (7, 1))  # only 3 available

    def test_bad_magic(self, tmp_path, idx_files):
        ip, lp = idx_files
        bad = tmp_path / "bad.idx"
        raw = bytearray(ip.read_bytes())
        raw[3] = 0x99
        bad.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_idx_subset(bad, lp, 1, (7, 1))

    def test_truncated_payload(self, tmp_path, idx_files):
        ip, lp = idx_files
        cut = tmp_path / "cut.idx"
        cut.write_bytes(ip.read_bytes()[:-3])
        with pytest.raises(FormatError):
            load_idx_subset(cut, lp, 1, (7, 1))

    def test_label_image_count_mismatch(self, tmp_path, idx_files):
        ip, _ = idx_files
        lab = struct.pack(">II", 0x801, 3) + bytes([7, 1, 7])
        lp = tmp_path / "short_labels.idx"
        lp.write_bytes(lab)
        with pytest.raises(FormatError):
            load_idx_subset(ip, lp, 1, (7, 1))

    def test_28x28_gives_784_features(self, tmp_path):
        img, lab = idx_bytes([0] * (2 * 28 * 28), [0, 1], rows=28, cols=28)
        ip = tmp_path / "mnistish.idx"
        lp = tmp_path / "mnistish_labels.idx"
        ip.write_bytes(img)
        lp.write_bytes(lab)
        data = load_idx_subset(ip, lp, 2, (0, 1))
        assert data.d == 784

    def test_gzip_transparent(self, tmp_path, idx_files):
        ip, lp = idx_files
        gz_i = tmp_path / "images.idx.gz"
        gz_l = tmp_path / "labels.idx.gz"
        gz_i.write_bytes(gzip.compress(ip.read_bytes()))
        gz_l.write_bytes(gzip.compress(lp.read_bytes()))
        data = load_idx_subset(gz_i, gz_l, 3, (7, 1))
        assert data.n == 3

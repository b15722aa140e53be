"""Phantom generator determinism, label exactness, and dataset I/O."""

import hashlib
import json

import numpy as np
import pytest

from wdsm.errors import DomainError, GenerationError
from wdsm.grid import pd_to_class12
from wdsm.phantom import (
    MANIFEST_NAME,
    generate_dataset,
    generate_phantom,
    load_manifest,
    load_sample,
)


class TestGeneratePhantom:
    def test_deterministic_bitwise(self):
        a = generate_phantom(123, 64, 7)
        b = generate_phantom(123, 64, 7)
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.breast_mask, b.breast_mask)
        np.testing.assert_array_equal(a.dense_truth, b.dense_truth)
        assert a.pd == b.pd

    def test_pd_is_exact_pixel_ratio(self):
        # independent pixel-count oracle
        for seed in range(8):
            s = generate_phantom(seed, 32, seed % 12)
            n_dense = int((s.dense_truth & s.breast_mask).sum())
            n_breast = int(s.breast_mask.sum())
            assert s.pd == n_dense / n_breast
            assert pd_to_class12(s.pd) == s.class12

    def test_zero_blobs_gives_empty_mask(self):
        s = generate_phantom(5, 32, 0, n_blobs=0)
        assert s.dense_truth.sum() == 0
        assert s.pd < 1 / 12

    def test_dense_inside_breast(self):
        for seed in range(6):
            s = generate_phantom(seed, 32, 9)
            assert (s.dense_truth & ~s.breast_mask).sum() == 0

    def test_background_dark_and_values_in_range(self):
        s = generate_phantom(3, 64, 8)
        outside = s.image[s.breast_mask == 0]
        assert outside.max() <= 0.05
        assert s.image.min() >= 0.0 and s.image.max() <= 1.0
        assert s.breast_mask.sum() >= 1

    def test_unreachable_class_raises(self):
        # no blobs but a high target class cannot be thresholded into place
        with pytest.raises(GenerationError):
            generate_phantom(0, 32, 11, n_blobs=0)

    def test_invalid_args(self):
        with pytest.raises(DomainError):
            generate_phantom(0, 33, 0)
        with pytest.raises(DomainError):
            generate_phantom(0, 16, 0)
        with pytest.raises(DomainError):
            generate_phantom(0, 64, 12)


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TestGenerateDataset:
    def test_stratified_has_one_per_class(self, tmp_path):
        m = generate_dataset(tmp_path, seed=1, n_train=12, n_test=12, size=32, stratified=True)
        assert m.class_histogram("train") == [1] * 12
        assert m.class_histogram("test") == [1] * 12

    def test_regeneration_is_checksum_identical(self, tmp_path):
        m1 = generate_dataset(tmp_path / "a", seed=9, n_train=3, n_test=2, size=32)
        m2 = generate_dataset(tmp_path / "b", seed=9, n_train=3, n_test=2, size=32)
        for e1, e2 in zip(m1.samples, m2.samples):
            assert _digest(m1.root / e1.image) == _digest(m2.root / e2.image)
            assert _digest(m1.root / e1.dense) == _digest(m2.root / e2.dense)
        assert _digest(m1.root / MANIFEST_NAME) == _digest(m2.root / MANIFEST_NAME)

    def test_manifest_rows_consistent(self, tmp_path):
        m = generate_dataset(tmp_path, seed=4, n_train=6, n_test=3, size=32)
        loaded = load_manifest(tmp_path / MANIFEST_NAME)
        assert len(loaded.samples) == 9
        for e in loaded.samples:
            assert pd_to_class12(e.pd) == e.class12
            s = load_sample(loaded, e)
            n_dense = int((s.dense_truth & s.breast_mask).sum())
            assert e.pd == n_dense / int(s.breast_mask.sum())

    def test_load_sample_without_dense(self, tmp_path):
        m = generate_dataset(tmp_path, seed=2, n_train=1, n_test=1, size=32)
        s = load_sample(m, m.samples[0], include_dense=False)
        assert s.dense_truth is None

    def test_counts_validated(self, tmp_path):
        with pytest.raises(DomainError):
            generate_dataset(tmp_path, seed=0, n_train=0, n_test=1, size=32)

    def test_manifest_version_checked(self, tmp_path):
        doc = {"version": 2, "samples": []}
        p = tmp_path / "manifest.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(DomainError):
            load_manifest(p)

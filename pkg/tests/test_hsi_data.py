import math
import struct
import unittest

import numpy as np
import pytest

from application.errors import ArgumentError, CubeFormatError
from application.hsi_data import (
    HsiCube, PatchSequence, SplitSpec, augment8, augment_all, class_signatures, compute_norm_stats, extract_patch,
    load_cube, load_labels, mirror_indices, normalize, save_cube, save_labels, stratified_split, synth_cube,
)
from application.tensor import Rng, Tensor


def coordinate_maps(n):
    """Where each output pixel (r, c) of the eight transforms reads from"""
    last = n - 1
    return [
        lambda r, c: (r, c),                  # identity
        lambda r, c: (c, last - r),           # rot90 (anticlockwise)
        lambda r, c: (last - r, last - c),    # rot180
        lambda r, c: (last - c, r),           # rot270
        lambda r, c: (r, last - c),           # horizontal flip
        lambda r, c: (last - r, c),           # vertical flip
        lambda r, c: (c, r),                  # rot90 after horizontal flip
        lambda r, c: (last - c, last - r),    # rot90 after vertical flip
    ]


def ramp_cube(l=2, m=6, n=5):
    values = np.arange(l * m * n, dtype=np.float64).reshape(l, m, n)
    labels = (np.arange(m * n).reshape(m, n) % 3) + 1
    return HsiCube(Tensor(values), labels)


# ===== FILE FORMAT TESTS =====

class TestCubeFiles:
    """Test cases for HSC1/HSL1 reading and writing"""

    @pytest.mark.parametrize("dtype", ["f32", "f64"])
    def test_save_then_load(self, tmp_path, dtype):
        """Test that a saved cube loads back with identical values and labels"""
        cube = ramp_cube()
        save_cube(cube, tmp_path / "cube.hsc", dtype=dtype)
        loaded = load_cube(tmp_path / "cube.hsc")
        assert loaded.values.equals(cube.values)
        np.testing.assert_array_equal(loaded.labels, cube.labels)

    def test_random_f64_cube_round_trips_exactly(self, tmp_path):
        """Test that default saving keeps every bit of a random double-precision cube"""
        labels = (np.arange(16).reshape(4, 4) % 2) + 1
        cube = HsiCube(Tensor(Rng(3).normal((3, 4, 4))), labels)
        save_cube(cube, tmp_path / "cube.hsc")
        assert struct.unpack_from("<I", (tmp_path / "cube.hsc").read_bytes(), 16) == (2,)
        assert load_cube(tmp_path / "cube.hsc").values.equals(cube.values)

    def test_lossy_f32_request_rejected(self, tmp_path):
        """Test that f32 is refused for values it cannot hold exactly"""
        cube = HsiCube(Tensor(Rng(3).normal((3, 4, 4))), np.ones((4, 4), dtype=np.int64))
        with pytest.raises(ArgumentError):
            save_cube(cube, tmp_path / "cube.hsc", dtype="f32")
        assert not (tmp_path / "cube.hsc").exists()

    def test_header_layout(self, tmp_path):
        """Test the little-endian header fields"""
        save_cube(ramp_cube(l=2, m=6, n=5), tmp_path / "cube.hsc")
        raw = (tmp_path / "cube.hsc").read_bytes()
        assert raw[:4] == b"HSC1"
        assert struct.unpack_from("<4I", raw, 4) == (6, 5, 2, 1)
        assert len(raw) == 20 + 2 * 6 * 5 * 4
        labels = (tmp_path / "cube.hsl").read_bytes()
        assert labels[:4] == b"HSL1" and len(labels) == 12 + 2 * 30

    def test_bad_magic_reports_offset(self, tmp_path):
        """Test that a wrong magic fails at byte offset 0"""
        (tmp_path / "bad.hsc").write_bytes(b"NOPE" + bytes(16))
        with pytest.raises(CubeFormatError) as excinfo:
            load_cube(tmp_path / "bad.hsc")
        assert excinfo.value.offset == 0
        assert "byte offset 0" in str(excinfo.value)

    def test_truncated_payload(self, tmp_path):
        """Test that a short payload is reported with the actual file length"""
        save_cube(ramp_cube(), tmp_path / "cube.hsc")
        raw = (tmp_path / "cube.hsc").read_bytes()
        (tmp_path / "cube.hsc").write_bytes(raw[:-7])
        with pytest.raises(CubeFormatError) as excinfo:
            load_cube(tmp_path / "cube.hsc")
        assert excinfo.value.offset == len(raw) - 7

    def test_truncated_header(self, tmp_path):
        """Test that a header cut short is a format error"""
        (tmp_path / "short.hsl").write_bytes(b"HSL1" + bytes(3))
        with pytest.raises(CubeFormatError):
            load_labels(tmp_path / "short.hsl")

    def test_label_raster_mismatch(self, tmp_path):
        """Test that labels must cover the cube raster"""
        save_cube(ramp_cube(m=6, n=5), tmp_path / "cube.hsc")
        save_labels(np.ones((5, 5), dtype=np.int64), tmp_path / "cube.hsl")
        with pytest.raises(CubeFormatError):
            load_cube(tmp_path / "cube.hsc")


# ===== PATCH TESTS =====

class TestPatches(unittest.TestCase):
    """Test cases for mirror padding and spectral unfolding"""

    def setUp(self):
        self.cube = ramp_cube(l=4, m=6, n=5)

    def test_mirror_indices_reflect_about_edge(self):
        """Test reflection that does not repeat the edge pixel"""
        self.assertEqual(mirror_indices(-2, 9, 5).tolist(), [2, 1, 0, 1, 2, 3, 4, 3, 2])
        self.assertEqual(mirror_indices(-3, 4, 1).tolist(), [0, 0, 0, 0])

    def test_interior_patch_is_a_window(self):
        """Test that an interior patch spans [i - p/2, i + p/2 - 1]"""
        seq = extract_patch(self.cube, 3, 2, 4, 1)
        self.assertEqual(len(seq.steps), 4)
        self.assertEqual(seq.label, int(self.cube.labels[3, 2]))
        np.testing.assert_array_equal(seq.steps[1].array[0], self.cube.values.array[1, 1:5, 0:4])

    def test_band_grouping(self):
        """Test that g consecutive bands form one step"""
        seq = extract_patch(self.cube, 0, 0, 2, 2)
        self.assertEqual(len(seq.steps), 2)
        self.assertEqual(seq.steps[0].shape, (2, 2, 2))
        np.testing.assert_array_equal(seq.steps[1].array[1], extract_patch(self.cube, 0, 0, 2, 1).steps[3].array[0])

    def test_corner_patch_is_mirrored(self):
        """Test the corner patch against mirror_indices"""
        seq = extract_patch(self.cube, 0, 0, 4)
        rows = mirror_indices(-2, 4, 6)
        cols = mirror_indices(-2, 4, 5)
        np.testing.assert_array_equal(seq.steps[0].array[0], self.cube.values.array[0][np.ix_(rows, cols)])

    def test_random_pixels_match_reflect_padding(self):
        """Test 1000 random pixels against np.pad(mode="reflect") followed by slicing"""
        values = Rng(4).normal((4, 12, 10))
        cube = HsiCube(Tensor(values), np.ones((12, 10), dtype=np.int64))
        p = 8
        padded = np.pad(values, ((0, 0), (p // 2, p // 2), (p // 2, p // 2)), mode="reflect")
        picks = np.random.default_rng(0)
        for _ in range(1000):
            i, j = int(picks.integers(12)), int(picks.integers(10))
            seq = extract_patch(cube, i, j, p)
            expected = padded[:, i:i + p, j:j + p]
            for k, step in enumerate(seq.steps):
                np.testing.assert_array_equal(step.array[0], expected[k])

    def test_invalid_patch_arguments(self):
        """Test patch size, band group and pixel range checks"""
        with self.assertRaises(ArgumentError):
            extract_patch(self.cube, 0, 0, 6)
        with self.assertRaises(ArgumentError):
            extract_patch(self.cube, 0, 0, 4, 3)
        with self.assertRaises(ArgumentError):
            extract_patch(self.cube, 6, 0, 4)


# ===== AUGMENTATION TESTS =====

class TestAugmentation:
    """Test cases for the eight rotate/flip transforms"""

    @pytest.mark.parametrize("n", [2, 5])
    def test_coordinate_oracle(self, n):
        """Test each transform against its coordinate map"""
        base = np.arange(2 * n * n, dtype=np.float64).reshape(2, n, n)
        seq = PatchSequence((Tensor(base), Tensor(base + 100.0)), 3, (1, 1))
        outputs = augment8(seq)
        assert len(outputs) == 8
        for out, mapping in zip(outputs, coordinate_maps(n)):
            assert out.label == 3 and out.origin == (1, 1)
            for step_in, step_out in zip(seq.steps, out.steps):
                for r in range(n):
                    for c in range(n):
                        src = mapping(r, c)
                        np.testing.assert_array_equal(step_out.array[:, r, c], step_in.array[:, src[0], src[1]])
                assert sorted(step_out.array.reshape(-1)) == sorted(step_in.array.reshape(-1))
        flattened = {out.steps[0].array.tobytes() for out in outputs}
        assert len(flattened) == 8

    def test_augment_all_multiplies_by_eight(self):
        """Test that the training set grows eightfold"""
        cube = ramp_cube(l=2)
        samples = [extract_patch(cube, 1, 1, 4), extract_patch(cube, 2, 3, 4)]
        augmented = augment_all(samples)
        assert len(augmented) == 16
        assert [s.label for s in augmented] == [samples[0].label] * 8 + [samples[1].label] * 8

    def test_non_square_rejected(self):
        """Test that rotations need square patches"""
        with pytest.raises(ArgumentError):
            augment8(PatchSequence((Tensor.zeros((1, 2, 4)),), 1, (0, 0)))


# ===== NORMALISATION AND SPLIT TESTS =====

class TestNormalisation:
    """Test cases for per-band standardisation"""

    def test_training_pixels_are_standardised(self, small_cube):
        """Test zero mean and unit deviation over the training pixels"""
        train, _ = stratified_split(small_cube, SplitSpec(fraction=0.3, seed=1))
        normalized, stats = normalize(small_cube, train)
        rows, cols = np.array(train).T
        spectra = normalized.values.array[:, rows, cols]
        np.testing.assert_allclose(spectra.mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(spectra.std(axis=1), 1.0, atol=1e-9)
        assert stats.mean.shape == (small_cube.l,)

    def test_constant_band_uses_std_floor(self):
        """Test that a constant band does not divide by zero"""
        values = np.ones((2, 4, 4))
        values[1] = np.arange(16.0).reshape(4, 4)
        cube = HsiCube(Tensor(values), np.ones((4, 4), dtype=np.int64))
        stats = compute_norm_stats(cube, [(0, 0), (1, 1)])
        assert stats.std.data[0] == 1e-8
        normalized, _ = normalize(cube, [(0, 0), (1, 1)])
        assert np.isfinite(normalized.values.array).all()


class TestStratifiedSplit:
    """Test cases for per-class train/test partitioning"""

    def test_fraction_rounds_half_up_with_minimum_one(self, small_cube):
        """Test per-class training counts, disjointness and ordering"""
        train, test = stratified_split(small_cube, SplitSpec(fraction=0.1, seed=3))
        for label, population in small_cube.class_populations().items():
            picked = sum(1 for i, j in train if small_cube.labels[i, j] == label)
            assert picked == max(1, math.floor(0.1 * population + 0.5))
        assert not set(train) & set(test)
        assert len(train) + len(test) == len(small_cube.labeled_pixels())
        assert train == sorted(train) and test == sorted(test)

    def test_same_seed_same_split(self, small_cube):
        """Test determinism and seed sensitivity"""
        a = stratified_split(small_cube, SplitSpec(fraction=0.2, seed=5))
        b = stratified_split(small_cube, SplitSpec(fraction=0.2, seed=5))
        c = stratified_split(small_cube, SplitSpec(fraction=0.2, seed=6))
        assert a == b
        assert a[0] != c[0]

    def test_absolute_counts(self, small_cube):
        """Test per-class absolute counts and their upper bound"""
        train, _ = stratified_split(small_cube, SplitSpec(counts={1: 2, 2: 3, 3: 1}, seed=0))
        assert len(train) == 6
        with pytest.raises(ArgumentError):
            stratified_split(small_cube, SplitSpec(counts={1: 10000, 2: 1, 3: 1}))

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.5])
    def test_invalid_fraction(self, fraction):
        """Test that the fraction must lie strictly between 0 and 1"""
        with pytest.raises(ArgumentError):
            SplitSpec(fraction=fraction)


# ===== SYNTHETIC CUBE TESTS =====

class TestSynthCube:
    """Test cases for the synthetic generator"""

    def test_deterministic(self):
        """Test that equal arguments give identical cubes"""
        a = synth_cube(3, 12, 12, 5, seed=7, separation=5.0)
        b = synth_cube(3, 12, 12, 5, seed=7, separation=5.0)
        assert a.values.equals(b.values)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_every_class_present(self):
        """Test that each class owns at least one region"""
        cube = synth_cube(4, 10, 10, 3, seed=1, separation=5.0, blobs=2)
        assert set(np.unique(cube.labels).tolist()) == {1, 2, 3, 4}

    def test_infinite_separation_is_noise_free(self):
        """Test that every pixel of a class equals its signature"""
        cube = synth_cube(3, 8, 8, 6, seed=2, separation=math.inf)
        signatures = class_signatures(3, 6, 2)
        for i in range(8):
            for j in range(8):
                np.testing.assert_array_equal(cube.values.array[:, i, j], signatures[cube.labels[i, j] - 1])

    def test_distinct_from_shares_leading_bands(self):
        """Test that the leading bands coincide across classes"""
        signatures = class_signatures(3, 10, 4, distinct_from=0.5)
        np.testing.assert_array_equal(signatures[0, :5], signatures[1, :5])
        np.testing.assert_array_equal(signatures[0, :5], signatures[2, :5])
        assert not np.array_equal(signatures[0, 5:], signatures[1, 5:])

    def test_well_separated_classes_are_centroid_separable(self):
        """Test nearest-centroid accuracy above 95% at separation 10"""
        cube = synth_cube(4, 24, 24, 8, seed=0, separation=10.0)
        spectra = cube.values.array.reshape(cube.l, -1).T
        labels = cube.labels.reshape(-1)
        centroids = np.stack([spectra[labels == c].mean(axis=0) for c in range(1, 5)])
        distances = ((spectra[:, None, :] - centroids[None]) ** 2).sum(axis=2)
        accuracy = np.mean(np.argmin(distances, axis=1) + 1 == labels)
        assert accuracy > 0.95

    def test_single_class_rejected(self):
        """Test the two-class minimum"""
        with pytest.raises(ArgumentError):
            synth_cube(1, 8, 8, 3, seed=0, separation=5.0)

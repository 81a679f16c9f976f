"""
Hyperspectral cubes: HSC1/HSL1 file I/O, patch extraction with mirror
padding, spectral unfolding, 8x flip/rotate augmentation, per-band
normalisation, stratified splitting and a synthetic cube generator.

File formats (all little-endian):

    HSC1 cube:   b"HSC1" | u32 m | u32 n | u32 l | u32 dtype (1 = f32, 2 = f64)
                 | band-major payload of l * m * n values
    HSL1 labels: b"HSL1" | u32 m | u32 n | m * n u16 labels (0 = unlabeled)
"""
import logging
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import gaussian_filter, gaussian_filter1d

from application.errors import ArgumentError, CubeFormatError, ShapeError
from application.tensor import Rng, Tensor

logger = logging.getLogger(__name__)

CUBE_MAGIC = b"HSC1"
LABEL_MAGIC = b"HSL1"
DTYPE_CODES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
DTYPE_NAMES = {"f32": 1, "f64": 2}
STD_FLOOR = 1e-8

Pixel = Tuple[int, int]


@dataclass(frozen=True)
class HsiCube:
    """Band-major values [l, m, n] with an aligned m x n label raster"""
    values: Tensor
    labels: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 3:
            raise ShapeError("Cube values must be [bands, rows, cols]", self.values.shape)
        if self.labels.shape != self.values.shape[1:]:
            raise ShapeError("Label raster does not match cube", self.labels.shape, self.values.shape)
        if self.labels.size and self.labels.min() < 0:
            raise ArgumentError("Labels must be non-negative")

    @property
    def l(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def n(self) -> int:
        return self.values.shape[2]

    @property
    def classes(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0

    def labeled_pixels(self) -> List[Pixel]:
        rows, cols = np.nonzero(self.labels)
        return list(zip(rows.tolist(), cols.tolist()))

    def class_populations(self) -> Dict[int, int]:
        counts = np.bincount(self.labels.reshape(-1), minlength=self.classes + 1)
        return {k: int(counts[k]) for k in range(1, self.classes + 1)}


@dataclass(frozen=True)
class PatchSequence:
    """l/g steps of [g, p, p] images unfolded from the sub-cube around origin"""
    steps: Tuple[Tensor, ...]
    label: int
    origin: Pixel

    def __post_init__(self):
        if not self.steps:
            raise ArgumentError("A patch sequence needs at least one step")
        for step in self.steps:
            if step.shape != self.steps[0].shape:
                raise ShapeError("Patch steps have different shapes", self.steps[0].shape, step.shape)

    @property
    def patch_size(self) -> int:
        return self.steps[0].shape[1]


@dataclass(frozen=True)
class SplitSpec:
    """Per-class training fraction, or absolute per-class counts, and a seed"""
    fraction: Optional[float] = 0.1
    counts: Optional[Dict[int, int]] = None
    seed: int = 0

    def __post_init__(self):
        if self.counts is None:
            if self.fraction is None or not 0.0 < self.fraction < 1.0:
                raise ArgumentError(f"Training fraction must lie in (0, 1), got {self.fraction}")
        elif any(c < 1 for c in self.counts.values()):
            raise ArgumentError("Per-class training counts must be at least 1")


@dataclass(frozen=True)
class NormStats:
    mean: Tensor
    std: Tensor


# ===== FILE I/O =====

def labels_path_for(path: Union[str, Path]) -> Path:
    return Path(path).with_suffix(".hsl")


def save_cube(cube: HsiCube, path: Union[str, Path], labels_path: Union[str, Path, None] = None,
              dtype: Optional[str] = None):
    """Write the cube (HSC1) and its labels (HSL1, default: same stem with .hsl).

    Without a dtype the cube is stored as f32 when that is exact, f64 otherwise.
    Asking for f32 on values that would lose precision is an error.
    """
    exact_f32 = bool(np.array_equal(cube.values.array.astype(np.float32), cube.values.array))
    if dtype is None:
        dtype = "f32" if exact_f32 else "f64"
    if dtype not in DTYPE_NAMES:
        raise ArgumentError(f"Unknown cube dtype {dtype!r}; expected one of {sorted(DTYPE_NAMES)}")
    if dtype == "f32" and not exact_f32:
        raise ArgumentError("Cube values are not exactly representable as f32; save as f64")
    if cube.classes > 0xFFFF:
        raise ArgumentError("Labels do not fit in u16")
    code = DTYPE_NAMES[dtype]
    path = Path(path)
    labels_path = Path(labels_path) if labels_path else labels_path_for(path)
    header = CUBE_MAGIC + struct.pack("<4I", cube.m, cube.n, cube.l, code)
    path.write_bytes(header + cube.values.array.astype(DTYPE_CODES[code]).tobytes())
    save_labels(cube.labels, labels_path)
    logger.debug("Saved cube", extra={"path": str(path), "shape": cube.values.shape})


def save_labels(labels: np.ndarray, path: Union[str, Path]):
    if labels.ndim != 2:
        raise ShapeError("Label raster must be 2-D", labels.shape)
    if labels.size and (labels.min() < 0 or labels.max() > 0xFFFF):
        raise ArgumentError("Labels do not fit in u16")
    header = LABEL_MAGIC + struct.pack("<2I", *labels.shape)
    Path(path).write_bytes(header + labels.astype("<u2").tobytes())


def _read_header(raw: bytes, magic: bytes, count: int, path) -> Tuple[int, ...]:
    if len(raw) < 4 or raw[:4] != magic:
        raise CubeFormatError(f"Bad magic: expected {magic.decode()!r}, found {raw[:4]!r}", 0, path)
    size = 4 + 4 * count
    if len(raw) < size:
        raise CubeFormatError("Truncated header", len(raw), path)
    return struct.unpack_from(f"<{count}I", raw, 4)


def load_labels(path: Union[str, Path]) -> np.ndarray:
    raw = Path(path).read_bytes()
    m, n = _read_header(raw, LABEL_MAGIC, 2, path)
    expected = 12 + 2 * m * n
    if len(raw) != expected:
        raise CubeFormatError(f"Label payload should end at {expected}", len(raw), path)
    return np.frombuffer(raw, dtype="<u2", offset=12).reshape(m, n).astype(np.int64)


def load_cube(path: Union[str, Path], labels_path: Union[str, Path, None] = None) -> HsiCube:
    path = Path(path)
    raw = path.read_bytes()
    m, n, l, code = _read_header(raw, CUBE_MAGIC, 4, path)
    if code not in DTYPE_CODES:
        raise CubeFormatError(f"Unknown dtype code {code}", 16, path)
    if min(m, n, l) == 0:
        raise CubeFormatError("Cube dimensions must be positive", 4, path)
    dtype = DTYPE_CODES[code]
    payload = l * m * n * dtype.itemsize
    if payload > 2 ** 40:
        raise CubeFormatError(f"Declared payload of {payload} bytes overflows the reader", 4, path)
    if len(raw) != 20 + payload:
        raise CubeFormatError(f"Payload should end at {20 + payload}", len(raw), path)
    values = np.frombuffer(raw, dtype=dtype, offset=20).astype(np.float64).reshape(l, m, n)
    labels = load_labels(labels_path if labels_path else labels_path_for(path))
    if labels.shape != (m, n):
        raise CubeFormatError(f"Label raster {labels.shape} does not match cube {(m, n)}", 4, path)
    return HsiCube(Tensor.wrap(values), labels)


# ===== PATCHES =====

def _is_power_of_two(value: int) -> bool:
    return value > 0 and value & (value - 1) == 0


def mirror_indices(start: int, count: int, size: int) -> np.ndarray:
    """Indices start..start+count-1 reflected into [0, size) about the edge pixels"""
    idx = np.arange(start, start + count)
    if size == 1:
        return np.zeros(count, dtype=np.int64)
    period = 2 * (size - 1)
    idx = np.mod(idx, period)
    return np.where(idx >= size, period - idx, idx)


def extract_patch(cube: HsiCube, i: int, j: int, p: int, g: int = 1) -> PatchSequence:
    """p x p window spanning [i - p/2, i + p/2 - 1] per band, grouped g bands per step"""
    if not _is_power_of_two(p) or p < 2:
        raise ArgumentError(f"Patch size must be a power of two, got {p}")
    if g < 1 or cube.l % g:
        raise ArgumentError(f"Band group {g} does not divide {cube.l} bands")
    if not (0 <= i < cube.m and 0 <= j < cube.n):
        raise ArgumentError(f"Pixel ({i}, {j}) lies outside the {cube.m}x{cube.n} cube")
    rows = mirror_indices(i - p // 2, p, cube.m)
    cols = mirror_indices(j - p // 2, p, cube.n)
    window = cube.values.array[:, rows[:, None], cols[None, :]]
    steps = tuple(Tensor.wrap(block) for block in window.reshape(cube.l // g, g, p, p))
    return PatchSequence(steps, int(cube.labels[i, j]), (i, j))


def extract_patches(cube: HsiCube, pixels: Sequence[Pixel], p: int, g: int = 1) -> List[PatchSequence]:
    return [extract_patch(cube, i, j, p, g) for i, j in pixels]


# ===== AUGMENTATION =====

def _rot90(x):
    return np.rot90(x, 1, axes=(-2, -1))


def _flip_h(x):
    return np.flip(x, axis=-1)


def _flip_v(x):
    return np.flip(x, axis=-2)


AUGMENTATIONS = (
    ("identity", lambda x: x),
    ("rot90", _rot90),
    ("rot180", lambda x: _rot90(_rot90(x))),
    ("rot270", lambda x: _rot90(_rot90(_rot90(x)))),
    ("flip_h", _flip_h),
    ("flip_v", _flip_v),
    ("rot90_flip_h", lambda x: _rot90(_flip_h(x))),
    ("rot90_flip_v", lambda x: _rot90(_flip_v(x))),
)


def augment8(seq: PatchSequence) -> List[PatchSequence]:
    """The identity, three anticlockwise rotations, two flips and the rotated flips"""
    if seq.steps[0].shape[1] != seq.steps[0].shape[2]:
        raise ArgumentError(f"Augmentation needs square patches, got {seq.steps[0].shape}")
    return [
        replace(seq, steps=tuple(Tensor(transform(step.array)) for step in seq.steps))
        for _, transform in AUGMENTATIONS
    ]


def augment_all(samples: Sequence[PatchSequence]) -> List[PatchSequence]:
    out = []
    for sample in samples:
        out.extend(augment8(sample))
    return out


# ===== NORMALISATION =====

def compute_norm_stats(cube: HsiCube, train_pixels: Sequence[Pixel]) -> NormStats:
    if len(train_pixels) == 0:
        raise ArgumentError("Normalisation needs at least one training pixel")
    rows, cols = np.array(train_pixels).T
    spectra = cube.values.array[:, rows, cols]
    mean = spectra.mean(axis=1)
    std = np.maximum(spectra.std(axis=1), STD_FLOOR)
    return NormStats(Tensor.wrap(mean), Tensor.wrap(std))


def apply_normalization(cube: HsiCube, stats: NormStats) -> HsiCube:
    if stats.mean.shape != (cube.l,):
        raise ShapeError("Normalisation statistics do not match band count", stats.mean.shape, (cube.l,))
    values = (cube.values.array - stats.mean.array[:, None, None]) / stats.std.array[:, None, None]
    return HsiCube(Tensor.wrap(values), cube.labels)


def normalize(cube: HsiCube, train_pixels: Sequence[Pixel]) -> Tuple[HsiCube, NormStats]:
    """Per-band standardisation using statistics of the training pixels only"""
    stats = compute_norm_stats(cube, train_pixels)
    return apply_normalization(cube, stats), stats


# ===== SPLITTING =====

def _half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(cube: HsiCube, spec: SplitSpec) -> Tuple[List[Pixel], List[Pixel]]:
    """Per-class sampling without replacement; both lists in row-major order"""
    populations = cube.class_populations()
    if not populations:
        raise ArgumentError("Cube has no labeled pixels")
    rng = Rng(spec.seed).derive("split")
    flat = cube.labels.reshape(-1)
    train, test = [], []
    for label, population in populations.items():
        if population == 0:
            raise ArgumentError(f"Class {label} has no labeled pixels")
        if spec.counts is not None:
            count = spec.counts.get(label, spec.counts.get(str(label)))
            if count is None:
                raise ArgumentError(f"No training count given for class {label}")
            if count > population:
                raise ArgumentError(f"Class {label} has {population} pixels, fewer than the {count} requested")
        else:
            count = max(1, _half_up(spec.fraction * population))
        members = np.flatnonzero(flat == label)
        chosen = members[rng.derive(label).permutation(population)[:count]]
        train.extend(chosen.tolist())
        test.extend(np.setdiff1d(members, chosen).tolist())
    to_pixel = lambda k: divmod(int(k), cube.n)
    return [to_pixel(k) for k in sorted(train)], [to_pixel(k) for k in sorted(test)]


# ===== SYNTHETIC CUBES =====

def class_signatures(classes: int, l: int, seed: int, distinct_from: float = 0.0) -> np.ndarray:
    """Smooth random spectra [classes, l], quantised to float32.

    Bands before distinct_from * l share one signature across all classes.
    """
    rng = Rng(seed).derive("signatures")
    raw = rng.normal((classes, l))
    smooth = gaussian_filter1d(raw, sigma=max(l / 10.0, 0.5), axis=1, mode="nearest")
    smooth = smooth / max(np.abs(smooth).max(), 1e-12) + 1.0
    shared = int(math.floor(distinct_from * l))
    if shared:
        smooth[:, :shared] = smooth[0, :shared]
    return smooth.astype(np.float32).astype(np.float64)


def _region_labels(classes: int, m: int, n: int, blobs: int, rng: Rng) -> np.ndarray:
    tiles = classes * blobs
    grid_rows = int(math.ceil(math.sqrt(tiles)))
    grid_cols = int(math.ceil(tiles / grid_rows))
    grid_rows = min(grid_rows, m)
    grid_cols = min(grid_cols, n)
    if grid_rows * grid_cols < classes:
        raise ArgumentError(f"A {m}x{n} raster cannot hold {classes} class regions")
    assignment = np.concatenate([
        np.arange(1, classes + 1),
        1 + (rng.next_u64(grid_rows * grid_cols - classes) % np.uint64(classes)).astype(np.int64),
    ])
    assignment = assignment[rng.permutation(assignment.size)].reshape(grid_rows, grid_cols)
    row_of = np.minimum(np.arange(m) * grid_rows // m, grid_rows - 1)
    col_of = np.minimum(np.arange(n) * grid_cols // n, grid_cols - 1)
    return assignment[row_of[:, None], col_of[None, :]]


def synth_cube(classes: int, m: int, n: int, l: int, seed: int, separation: float, blobs: int = 1,
               spatial_correlation: float = 0.5, distinct_from: float = 0.0) -> HsiCube:
    """Rectangular class regions; pixel = class signature + noise of std spread / separation.

    Half of the noise variance (spatial_correlation) is a Gaussian-smoothed
    field, so neighbouring pixels share noise and spatial context helps.
    """
    if classes < 2:
        raise ArgumentError(f"Need at least 2 classes, got {classes}")
    if min(m, n, l) < 1 or blobs < 1:
        raise ArgumentError(f"Degenerate synthetic cube dimensions {m}x{n}x{l}")
    if not separation > 0:
        raise ArgumentError(f"Separation must be positive, got {separation}")
    if not 0.0 <= spatial_correlation <= 1.0 or not 0.0 <= distinct_from < 1.0:
        raise ArgumentError("spatial_correlation must lie in [0, 1] and distinct_from in [0, 1)")

    rng = Rng(seed)
    labels = _region_labels(classes, m, n, blobs, rng.derive("regions"))
    signatures = class_signatures(classes, l, seed, distinct_from)
    clean = signatures[labels - 1].transpose(2, 0, 1)

    noise_std = float(signatures.std()) / separation
    if noise_std == 0.0:
        values = clean
    else:
        noise_rng = rng.derive("noise")
        white = noise_rng.normal((l, m, n))
        field_ = gaussian_filter(noise_rng.normal((l, m, n)), sigma=(0, 1.5, 1.5), mode="reflect")
        field_ = field_ / max(field_.std(), 1e-12)
        noise = np.sqrt(1.0 - spatial_correlation) * white + np.sqrt(spatial_correlation) * field_
        values = (clean + noise_std * noise).astype(np.float32).astype(np.float64)
    logger.debug("Synthesised cube", extra={"classes": classes, "shape": (l, m, n), "noise_std": noise_std})
    return HsiCube(Tensor.wrap(values), labels.astype(np.int64))

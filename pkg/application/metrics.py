"""
Confusion matrices and the accuracy statistics reported for classification
maps: overall accuracy, average accuracy, per-class accuracy and Cohen's
kappa. Also renders class rasters as portable pixmaps.
"""
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from application.errors import ArgumentError, ShapeError
from application.extensions import parallel_map
from application.hsi_data import HsiCube, PatchSequence, extract_patch
from application.models import BiClstmModel, predict

logger = logging.getLogger(__name__)


class ConfusionMatrix:
    """Counts [c, c]; rows are true classes, columns predicted classes (0-based)"""

    def __init__(self, classes: int, counts: Optional[np.ndarray] = None):
        if classes < 1:
            raise ArgumentError(f"A confusion matrix needs at least one class, got {classes}")
        self.classes = classes
        self.counts = np.zeros((classes, classes), dtype=np.int64) if counts is None else np.array(counts, dtype=np.int64)
        if self.counts.shape != (classes, classes):
            raise ShapeError("Counts do not match class count", self.counts.shape, (classes, classes))
        if (self.counts < 0).any():
            raise ArgumentError("Confusion counts must be non-negative")

    @classmethod
    def from_pairs(cls, classes: int, pairs: Iterable[Tuple[int, int]]) -> "ConfusionMatrix":
        cm = cls(classes)
        for true, pred in pairs:
            cm.accumulate(true, pred)
        return cm

    def accumulate(self, true: int, pred: int) -> "ConfusionMatrix":
        if not (0 <= true < self.classes and 0 <= pred < self.classes):
            raise ArgumentError(f"Class pair ({true}, {pred}) out of range for {self.classes} classes")
        self.counts[true, pred] += 1
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.classes != self.classes:
            raise ShapeError("Cannot merge matrices of different size", self.counts.shape, other.counts.shape)
        return ConfusionMatrix(self.classes, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    def _require_counts(self):
        if self.total == 0:
            raise ArgumentError("Confusion matrix is empty")


def oa(cm: ConfusionMatrix) -> float:
    cm._require_counts()
    return float(np.trace(cm.counts)) / cm.total


def per_class(cm: ConfusionMatrix) -> np.ndarray:
    """Recall per true class; NaN for classes with no evaluated pixels"""
    cm._require_counts()
    rows = cm.counts.sum(axis=1)
    diag = np.diag(cm.counts).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(rows > 0, diag / np.maximum(rows, 1), np.nan)


def aa(cm: ConfusionMatrix) -> float:
    """Mean per-class accuracy over the classes present in the evaluated set"""
    accuracies = per_class(cm)
    missing = np.flatnonzero(np.isnan(accuracies))
    if missing.size:
        logger.warning("Classes absent from the evaluated pixels are excluded from AA",
                       extra={"classes": (missing + 1).tolist()})
    return float(np.nanmean(accuracies))


def kappa(cm: ConfusionMatrix) -> float:
    cm._require_counts()
    total = float(cm.total)
    p_o = oa(cm)
    p_e = float(np.sum(cm.counts.sum(axis=1).astype(np.float64) * cm.counts.sum(axis=0))) / total ** 2
    if p_e == 1.0:
        if p_o == 1.0:
            return 1.0
        raise ArgumentError("Kappa is undefined: chance agreement is 1 but observed agreement is not")
    return (p_o - p_e) / (1.0 - p_e)


def metrics_report(cm: ConfusionMatrix) -> dict:
    """Plain dict of every statistic plus the raw counts"""
    accuracies = per_class(cm)
    report = {
        "oa": oa(cm),
        "aa": aa(cm),
        "kappa": kappa(cm),
        "per_class": [None if np.isnan(a) else float(a) for a in accuracies],
        "confusion": cm.counts.tolist(),
        "total": cm.total,
    }
    assert 0.0 <= report["oa"] <= 1.0 and 0.0 <= report["aa"] <= 1.0
    assert -1.0 <= report["kappa"] <= 1.0 + 1e-12
    return report


def summarize_runs(values: Sequence[float]) -> Dict[str, float]:
    """Mean and population standard deviation over repeated runs"""
    if not values:
        raise ArgumentError("No runs to summarise")
    array = np.asarray(values, dtype=np.float64)
    return {"mean": float(array.mean()), "std": float(array.std()), "runs": len(values)}


# ===== CLASS MAPS =====

# Index 0 (unlabeled / not predicted) is black; classes cycle through the rest.
PALETTE: List[Tuple[int, int, int]] = [
    (0, 0, 0),
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 212),
    (0, 128, 128), (220, 190, 255), (170, 110, 40), (255, 250, 200), (128, 0, 0),
    (170, 255, 195), (128, 128, 0), (255, 215, 180), (0, 0, 128), (128, 128, 128),
]


def colorize(raster: np.ndarray) -> np.ndarray:
    palette = np.array(PALETTE, dtype=np.uint8)
    indices = np.where(raster > 0, (raster - 1) % (len(PALETTE) - 1) + 1, 0)
    return palette[indices]


def write_map(raster: np.ndarray, path: Union[str, Path]):
    """Binary PPM (P6) with the fixed palette"""
    Image.fromarray(colorize(raster)).save(Path(path), format="PPM")


def evaluate_samples(model: BiClstmModel, samples: Sequence[PatchSequence], classes: int, threads: int = 1) -> ConfusionMatrix:
    """Confusion matrix of inference-mode predictions; labels are 1-based"""
    predictions = parallel_map(lambda sample: predict(sample, model)[0], samples, threads)
    cm = ConfusionMatrix(classes)
    for sample, pred in zip(samples, predictions):
        cm.accumulate(sample.label - 1, pred)
    return cm


def render_map(cube: HsiCube, model: BiClstmModel, path: Union[str, Path, None] = None, all_pixels: bool = False,
               threads: int = 1) -> np.ndarray:
    """Predicted class raster (1-based, 0 where not predicted), optionally written as PPM.

    The cube must already be normalised the way the model was trained.
    """
    cfg = model.config
    if cube.l != cfg.bands:
        raise ShapeError("Cube band count does not match the model", (cube.l,), (cfg.bands,))
    if all_pixels:
        pixels = [(i, j) for i in range(cube.m) for j in range(cube.n)]
    else:
        pixels = cube.labeled_pixels()
    predict_pixel = lambda ij: predict(extract_patch(cube, ij[0], ij[1], cfg.patch_size, cfg.band_group), model)[0]
    predictions = parallel_map(predict_pixel, pixels, threads)
    raster = np.zeros((cube.m, cube.n), dtype=np.int64)
    for (i, j), pred in zip(pixels, predictions):
        raster[i, j] = pred + 1
    if path is not None:
        write_map(raster, path)
    return raster

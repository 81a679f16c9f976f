"""
Dense float64 tensors and the counter-based random number generator.

Tensor wraps a read-only numpy array. Arithmetic between tensors never
broadcasts: both operands must have identical shapes.
"""
import hashlib
import logging
from typing import Iterable, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from application.errors import ArgumentError, ShapeError

logger = logging.getLogger(__name__)

ShapeLike = Union[int, Sequence[int]]


def _as_shape(shape: ShapeLike) -> Tuple[int, ...]:
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    shape = tuple(int(s) for s in shape)
    if any(s <= 0 for s in shape):
        raise ShapeError("Dimension sizes must be positive", shape)
    return shape


class Tensor:
    """Immutable dense n-dimensional array of 64-bit floats"""

    __slots__ = ("_array",)

    def __init__(self, data, shape: ShapeLike = None):
        array = np.array(data, dtype=np.float64)
        if shape is not None:
            shape = _as_shape(shape)
            if array.size != int(np.prod(shape)):
                raise ShapeError(f"Buffer of length {array.size} does not fill shape", shape)
            array = array.reshape(shape)
        array.setflags(write=False)
        self._array = array

    @classmethod
    def wrap(cls, array: np.ndarray) -> "Tensor":
        """Adopt an array without copying when it is already float64.

        The caller gives up ownership: the array is frozen in place.
        """
        tensor = cls.__new__(cls)
        array = np.asarray(array, dtype=np.float64)
        array.setflags(write=False)
        tensor._array = array
        return tensor

    @classmethod
    def zeros(cls, shape: ShapeLike) -> "Tensor":
        return cls.wrap(np.zeros(_as_shape(shape)))

    @classmethod
    def full(cls, shape: ShapeLike, value: float) -> "Tensor":
        return cls.wrap(np.full(_as_shape(shape), float(value)))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self._array.shape

    @property
    def data(self) -> np.ndarray:
        """Flat row-major view of the buffer"""
        return self._array.reshape(-1)

    @property
    def array(self) -> np.ndarray:
        return self._array

    @property
    def size(self) -> int:
        return self._array.size

    @property
    def ndim(self) -> int:
        return self._array.ndim

    def reshape(self, shape: ShapeLike) -> "Tensor":
        shape = _as_shape(shape)
        if int(np.prod(shape)) != self.size:
            raise ShapeError("Cannot reshape", self.shape, shape)
        return Tensor.wrap(self._array.reshape(shape))

    def _check_same_shape(self, other: "Tensor", op: str):
        if not isinstance(other, Tensor):
            raise TypeError(f"{op} expects a Tensor, got {type(other).__name__}")
        if self.shape != other.shape:
            raise ShapeError(f"Shape mismatch in {op}", self.shape, other.shape)

    def __add__(self, other: "Tensor") -> "Tensor":
        self._check_same_shape(other, "add")
        return Tensor.wrap(self._array + other._array)

    def __sub__(self, other: "Tensor") -> "Tensor":
        self._check_same_shape(other, "subtract")
        return Tensor.wrap(self._array - other._array)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return hadamard(self, other)

    def __neg__(self) -> "Tensor":
        return Tensor.wrap(-self._array)

    def scale(self, factor: float) -> "Tensor":
        return Tensor.wrap(self._array * float(factor))

    def sum(self) -> float:
        return float(self._array.sum())

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self._array * self._array)))

    def equals(self, other: "Tensor") -> bool:
        """Bitwise equality of shape and contents"""
        return (
            isinstance(other, Tensor)
            and self.shape == other.shape
            and self._array.tobytes() == other._array.tobytes()
        )

    def allclose(self, other: "Tensor", atol: float = 1e-12) -> bool:
        return self.shape == other.shape and bool(np.allclose(self._array, other._array, rtol=0.0, atol=atol))

    def tolist(self):
        return self._array.tolist()

    def __repr__(self):
        return f"Tensor(shape={self.shape})"


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two equally shaped tensors"""
    if a.shape != b.shape:
        raise ShapeError("Shape mismatch in hadamard", a.shape, b.shape)
    return Tensor.wrap(a.array * b.array)


def map_sigmoid(a: Tensor) -> Tensor:
    return Tensor.wrap(expit(a.array))


def map_tanh(a: Tensor) -> Tensor:
    return Tensor.wrap(np.tanh(a.array))


def concat(tensors: Iterable[Tensor]) -> Tensor:
    """Flatten and join tensors into one vector"""
    return Tensor.wrap(np.concatenate([t.data for t in tensors]))


# SplitMix64 constants
_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MUL1 = 0xBF58476D1CE4E5B9
_MUL2 = 0x94D049BB133111EB


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MUL1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MUL2)
    return z ^ (z >> np.uint64(31))


def _mix64_int(value: int) -> int:
    return int(_mix64(np.array([value & _MASK64], dtype=np.uint64))[0])


class Rng:
    """Counter-based generator: output k is splitmix64(seed + k * gamma).

    The k-th 64-bit word depends only on the seed and k, so a stream can be
    reproduced from (seed, counter) alone on any platform. Doubles take the
    top 53 bits of a word; normals use one Box-Muller pair per sample.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & _MASK64
        self.counter = int(counter)

    def next_u64(self, n: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            k = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
            words = _mix64(np.uint64(self.seed) + k * np.uint64(_GAMMA))
        self.counter += n
        return words

    def random(self, n: int) -> np.ndarray:
        """n doubles uniform in [0, 1)"""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)

    def uniform(self, shape: ShapeLike, lo: float = 0.0, hi: float = 1.0) -> Tensor:
        shape = _as_shape(shape)
        if not lo < hi:
            raise ArgumentError(f"uniform requires lo < hi, got lo={lo}, hi={hi}")
        values = lo + (hi - lo) * self.random(int(np.prod(shape)))
        values = np.minimum(values, np.nextafter(hi, lo))
        return Tensor.wrap(values.reshape(shape))

    def normal(self, shape: ShapeLike, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        shape = _as_shape(shape)
        n = int(np.prod(shape))
        u1 = 1.0 - self.random(n)
        u2 = self.random(n)
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return (mean + std * z).reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        return np.argsort(self.next_u64(n), kind="stable")

    def derive(self, *keys) -> "Rng":
        """Independent child stream keyed by ints or strings; does not advance self"""
        seed = self.seed
        for key in keys:
            if isinstance(key, str):
                key = int.from_bytes(hashlib.blake2b(key.encode(), digest_size=8).digest(), "little")
            seed = _mix64_int(seed ^ _mix64_int((int(key) + _GAMMA) & _MASK64))
        return Rng(seed)

    def state(self) -> Tuple[int, int]:
        return self.seed, self.counter

    def __repr__(self):
        return f"Rng(seed={self.seed}, counter={self.counter})"


def rng_uniform(rng: Rng, shape: ShapeLike, lo: float, hi: float) -> Tensor:
    return rng.uniform(shape, lo, hi)

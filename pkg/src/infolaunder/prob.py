"""Finite-alphabet probability machinery.

Distributions are probability vectors, kernels are column-stochastic matrices
indexed ``[out, in]`` so that column ``i`` is ``p(. | in = i)``.  Everything
is in nats.  Values are immutable once built; the numpy payloads are flagged
read-only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, DomainError, ShapeError

PROB_TOL = 1e-9


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Alphabet:
    labels: tuple

    def __post_init__(self):
        labels = tuple(str(label) for label in self.labels)
        if not labels:
            raise DomainError("an alphabet needs at least one symbol")
        if any(label == "" for label in labels):
            raise DomainError("alphabet labels must be non-empty")
        if len(set(labels)) != len(labels):
            raise DomainError(f"alphabet labels are not unique: {labels}")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def of_size(cls, n: int) -> "Alphabet":
        """Alphabet with labels ``"0" .. "n-1"``."""
        if n < 1:
            raise DomainError("alphabet size must be >= 1")
        return cls(tuple(str(i) for i in range(n)))

    @property
    def size(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise DomainError(f"unknown symbol {label!r}") from None

    def __len__(self):
        return self.size


@dataclass(frozen=True, eq=False)
class Distribution:
    alphabet: Alphabet
    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.ndim != 1 or probs.shape[0] != self.alphabet.size:
            raise ShapeError(f"probability vector of shape {probs.shape} for alphabet of size {self.alphabet.size}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise DomainError("probabilities must be finite and non-negative")
        if abs(probs.sum() - 1.0) > PROB_TOL:
            raise DomainError(f"probabilities sum to {probs.sum()!r}, not 1")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, alphabet: Alphabet) -> "Distribution":
        return cls(alphabet, np.full(alphabet.size, 1.0 / alphabet.size))

    @classmethod
    def point_mass(cls, alphabet: Alphabet, index: int) -> "Distribution":
        probs = np.zeros(alphabet.size)
        probs[index] = 1.0
        return cls(alphabet, probs)

    def __len__(self):
        return self.alphabet.size

    def __repr__(self):
        return f"Distribution({list(self.alphabet.labels)}, {np.round(self.probs, 6).tolist()})"


@dataclass(frozen=True, eq=False)
class Kernel:
    input_alphabet: Alphabet
    output_alphabet: Alphabet
    matrix: np.ndarray

    def __post_init__(self):
        matrix = _frozen(self.matrix)
        expected = (self.output_alphabet.size, self.input_alphabet.size)
        if matrix.shape != expected:
            raise ShapeError(f"kernel matrix has shape {matrix.shape}, alphabets require {expected}")
        if not np.all(np.isfinite(matrix)) or np.any(matrix < 0):
            raise DomainError("kernel entries must be finite and non-negative")
        sums = matrix.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > PROB_TOL):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise DomainError(f"kernel column {bad} sums to {sums[bad]!r}, not 1")
        object.__setattr__(self, "matrix", matrix)

    @classmethod
    def identity(cls, alphabet: Alphabet) -> "Kernel":
        return cls(alphabet, alphabet, np.eye(alphabet.size))

    @classmethod
    def constant(cls, input_alphabet: Alphabet, column: Distribution) -> "Kernel":
        """Kernel whose every column is ``column`` (output independent of input)."""
        matrix = np.tile(column.probs[:, None], (1, input_alphabet.size))
        return cls(input_alphabet, column.alphabet, matrix)

    @classmethod
    def from_matrix(cls, matrix, input_alphabet: Alphabet | None = None,
                    output_alphabet: Alphabet | None = None) -> "Kernel":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2:
            raise ShapeError("kernel matrix must be two-dimensional")
        return cls(input_alphabet or Alphabet.of_size(matrix.shape[1]),
                   output_alphabet or Alphabet.of_size(matrix.shape[0]), matrix)

    @property
    def shape(self):
        return self.matrix.shape

    def column(self, i: int) -> Distribution:
        return Distribution(self.output_alphabet, self.matrix[:, i])


@dataclass(frozen=True, eq=False)
class DeterministicModel:
    input_alphabet: Alphabet
    output_alphabet: Alphabet
    map: tuple

    def __post_init__(self):
        mapping = tuple(int(v) for v in self.map)
        if len(mapping) != self.input_alphabet.size:
            raise ShapeError(f"map has {len(mapping)} entries for {self.input_alphabet.size} inputs")
        if any(v < 0 or v >= self.output_alphabet.size for v in mapping):
            raise DomainError("mapped index outside the output alphabet")
        object.__setattr__(self, "map", mapping)

    def __call__(self, i: int) -> int:
        return self.map[i]


def normalize(weights: Sequence[float], alphabet: Alphabet) -> Distribution:
    w = np.asarray(weights, dtype=float)
    if w.shape != (alphabet.size,):
        raise ShapeError(f"{w.shape[0] if w.ndim == 1 else w.shape} weights for alphabet of size {alphabet.size}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DomainError("weights must be finite and non-negative")
    total = w.sum()
    if total <= 0:
        raise DegenerateInputError("cannot normalize an all-zero weight vector")
    return Distribution(alphabet, w / total)


def _same(a: Alphabet, b: Alphabet, what: str):
    if a != b:
        raise ShapeError(f"{what}: alphabets {a.labels} and {b.labels} differ")


def kl_array(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats on raw vectors; ``inf`` if p is not absolutely continuous w.r.t. q."""
    support = p > 0
    if np.any(q[support] <= 0):
        return float("inf")
    return float(np.sum(p[support] * (np.log(p[support]) - np.log(q[support]))))


def kl_divergence(p: Distribution, q: Distribution) -> float:
    _same(p.alphabet, q.alphabet, "kl_divergence")
    return max(kl_array(p.probs, q.probs), 0.0)


def entropy(p: Distribution) -> float:
    probs = p.probs[p.probs > 0]
    return float(-np.sum(probs * np.log(probs)))


def mi_array(px: np.ndarray, k: np.ndarray) -> float:
    """I(X; Y) for X ~ px and Y | X ~ k[:, x] (column-stochastic ``k``)."""
    used = k[:, px > 0]
    if np.all(used == used[:, :1]):
        return 0.0  # the rounded marginal would leave a ~1e-16 residue
    m = k @ px
    joint = k * px[None, :]
    mask = joint > 0
    ratio = np.log(k[mask]) - np.log(np.broadcast_to(m[:, None], k.shape)[mask])
    return float(np.sum(joint[mask] * ratio))


def mutual_information(input_dist: Distribution, k: Kernel) -> float:
    _same(input_dist.alphabet, k.input_alphabet, "mutual_information")
    return max(mi_array(input_dist.probs, k.matrix), 0.0)


def pushforward(input_dist: Distribution, k: Kernel) -> Distribution:
    _same(input_dist.alphabet, k.input_alphabet, "pushforward")
    out = k.matrix @ input_dist.probs
    return Distribution(k.output_alphabet, out / out.sum())


def cascade(first: Kernel, second: Kernel) -> Kernel:
    """Kernel of ``in -> first -> second -> out`` (data-flow order)."""
    _same(first.output_alphabet, second.input_alphabet, "cascade")
    matrix = second.matrix @ first.matrix
    return Kernel(first.input_alphabet, second.output_alphabet, matrix / matrix.sum(axis=0, keepdims=True))


def one_hot_kernel(f: DeterministicModel) -> Kernel:
    matrix = np.zeros((f.output_alphabet.size, f.input_alphabet.size))
    matrix[list(f.map), np.arange(f.input_alphabet.size)] = 1.0
    return Kernel(f.input_alphabet, f.output_alphabet, matrix)


def as_kernel(model) -> Kernel:
    """Accept either a Kernel or a DeterministicModel."""
    if isinstance(model, DeterministicModel):
        return one_hot_kernel(model)
    return model


def sample(dist: Distribution, rng: np.random.Generator) -> int:
    """Draw one index from ``dist``, consuming exactly one uniform from ``rng``."""
    return int(sample_columns(dist.probs[:, None], np.zeros(1, dtype=int), rng)[0])


def sample_columns(matrix: np.ndarray, columns: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """For each entry ``c`` of ``columns`` draw a row index from ``matrix[:, c]``.

    Inverse-CDF sampling with one uniform per draw, so results depend only on
    the generator state.
    """
    cdf = np.cumsum(matrix, axis=0)
    # from the last positive entry on, the cdf is 1 by definition; pin it so
    # rounding can never select a trailing zero-mass symbol
    n = matrix.shape[0]
    last = n - 1 - np.argmax((matrix > 0)[::-1, :], axis=0)
    cdf[np.arange(n)[:, None] >= last[None, :]] = np.inf
    u = rng.random(len(columns))
    return (u[None, :] >= cdf[:, columns]).sum(axis=0)


def expected_kl_array(px: np.ndarray, kstar: np.ndarray, k: np.ndarray) -> float:
    total = 0.0
    for x in np.flatnonzero(px > 0):
        d = kl_array(kstar[:, x], k[:, x])
        if d == float("inf"):
            return d
        total += px[x] * d
    return total


def expected_kl(px: Distribution, kstar: Kernel, k: Kernel) -> float:
    """E_{x ~ px} KL(kstar(.|x) || k(.|x))."""
    _same(kstar.input_alphabet, k.input_alphabet, "expected_kl")
    _same(kstar.output_alphabet, k.output_alphabet, "expected_kl")
    _same(px.alphabet, kstar.input_alphabet, "expected_kl")
    return max(expected_kl_array(px.probs, kstar.matrix, k.matrix), 0.0)

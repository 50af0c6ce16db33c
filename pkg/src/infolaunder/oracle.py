"""Brute-force global minimizers on simplex grids, for tiny instances.

Every kernel column is restricted to the grid ``{c / N : c a composition of
N}`` with ``N = 1 / step``.  Kernels are enumerated column by column in
lexicographic order of the compositions; the first minimizer in that order
wins ties, so results are deterministic.

Two enumeration methods are offered:

* ``"exhaustive"`` evaluates the objective at every grid kernel.
* ``"split"`` (single block, column-separable fit term only) uses
  ``min_K L(K) = min_h min_K J(K, h)``: for a fixed grid marginal ``h`` the
  surrogate separates over columns, so the cost is ``|grid|^2`` per column
  instead of ``|grid|^columns``.  It returns the best grid kernel for the
  best grid ``h``; the reported objective is the true one at that kernel.

The work (objective or column-cost evaluations) is checked against
``GridSpec.budget`` before anything is allocated.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.special import xlogy

from .errors import BudgetExceeded, DomainError, ShapeError
from .prob import Alphabet, DeterministicModel, Distribution, Kernel, as_kernel, one_hot_kernel

_BATCH = 1 << 16


@dataclass(frozen=True)
class GridSpec:
    step: float
    max_dims: int = 3
    budget: float = 1e7

    def __post_init__(self):
        if not 0 < self.step <= 0.5:
            raise DomainError(f"grid step must lie in (0, 0.5], got {self.step}")
        if abs(1.0 / self.step - round(1.0 / self.step)) > 1e-6:
            raise DomainError(f"grid step must divide 1, got {self.step}")
        if self.max_dims < 1 or not self.budget > 0:
            raise DomainError("max_dims must be >= 1 and budget > 0")

    @property
    def resolution(self) -> int:
        return int(round(1.0 / self.step))

    def points_per_column(self, dims: int) -> int:
        return comb(self.resolution + dims - 1, dims - 1)


@dataclass(frozen=True, eq=False)
class OracleResult:
    k1: Optional[Kernel]
    k2: Optional[Kernel]
    objective: float
    evaluations: int

    @property
    def kernel(self) -> Kernel:
        return self.k2 if self.k1 is None else self.k1

    def __iter__(self):
        # (kernel, objective) unpacking for single-block searches
        if self.k1 is not None and self.k2 is not None:
            return iter((self.k1, self.k2, self.objective))
        return iter((self.kernel, self.objective))


def simplex_grid(dims: int, resolution: int) -> np.ndarray:
    """All points ``c / resolution`` with ``c`` a composition of ``resolution``
    into ``dims`` non-negative parts, in ascending lexicographic order of ``c``."""
    counts = np.array([
        [hi - lo - 1 for lo, hi in zip((-1,) + cut, cut + (resolution + dims - 1,))]
        for cut in itertools.combinations(range(resolution + dims - 1), dims - 1)  # stars and bars
    ], dtype=np.int64).reshape(-1, dims)
    counts = counts[np.lexsort(counts.T[::-1])]
    return counts / resolution


def _check_dims(dims: int, grid: GridSpec):
    if dims > grid.max_dims:
        raise ShapeError(f"alphabet size {dims} exceeds the oracle cap max_dims={grid.max_dims}")


def _require_budget(required: int, grid: GridSpec):
    if required > grid.budget:
        raise BudgetExceeded(required, grid.budget)


def _weighted(weights, terms):
    # columns without mass drop out even when their term is infinite
    return np.sum(np.where(weights > 0, weights * terms, 0.0), axis=-1)


def batch_objective(px: np.ndarray, ks: np.ndarray, k1s: Optional[np.ndarray], k2s: Optional[np.ndarray],
                    beta1: float, beta2: float) -> np.ndarray:
    """Objective for a batch of kernels (``None`` means the identity)."""
    if k1s is None:
        front = ks[None, :, :]
        mi_in = 0.0
    else:
        front = ks[None] @ k1s
        h1 = k1s @ px
        with np.errstate(divide="ignore", invalid="ignore"):
            mi_in = _weighted(px, np.sum(xlogy(k1s, k1s) - xlogy(k1s, h1[:, :, None]), axis=1))
    eff = front if k2s is None else k2s @ front
    with np.errstate(divide="ignore", invalid="ignore"):
        fit = _weighted(px, np.sum(xlogy(ks, ks)[None] - xlogy(ks[None], eff), axis=1))
    if k2s is None:
        mi_out = 0.0
    else:
        pyt = np.broadcast_to(front @ px, k2s.shape[:2])
        py = np.einsum("byt,bt->by", k2s, pyt)
        with np.errstate(divide="ignore", invalid="ignore"):
            leak = xlogy(k2s, k2s) - xlogy(k2s, py[:, :, None])
            mi_out = _weighted(pyt, np.sum(leak, axis=1))
    return fit + beta1 * mi_in + beta2 * mi_out


def _kernels_from_digits(points: np.ndarray, digits: np.ndarray) -> np.ndarray:
    # digits [B, columns] -> kernels [B, dims, columns]
    return np.transpose(points[digits], (0, 2, 1))


def _exhaustive(px, ks, n1, n2, beta1, beta2, grid: GridSpec, dump=None):
    """Enumerate K1 (n1 x n1, if n1) then K2 (n2 x n2, if n2) column by column."""
    g1 = simplex_grid(n1, grid.resolution) if n1 else None
    g2 = simplex_grid(n2, grid.resolution) if n2 else None
    bases = ([len(g1)] * n1 if n1 else []) + ([len(g2)] * n2 if n2 else [])
    total = int(np.prod(bases, dtype=object))
    _require_budget(total, grid)
    best_val, best_idx = np.inf, None
    for start in range(0, total, _BATCH):
        flat = np.arange(start, min(start + _BATCH, total))
        digits = np.stack(np.unravel_index(flat, bases), axis=1)
        k1s = _kernels_from_digits(g1, digits[:, :n1]) if n1 else None
        k2s = _kernels_from_digits(g2, digits[:, n1:]) if n2 else None
        vals = batch_objective(px, ks, k1s, k2s, beta1, beta2)
        if dump is not None:
            for d, v in zip(digits, vals):
                dump.writerow([*np.concatenate([(g1 if i < n1 else g2)[j] for i, j in enumerate(d)]), repr(float(v))])
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_idx = float(vals[i]), digits[i]
    k1 = _kernels_from_digits(g1, best_idx[None, :n1])[0] if n1 else None
    k2 = _kernels_from_digits(g2, best_idx[None, n1:])[0] if n2 else None
    return k1, k2, best_val, total


def _split(weights: np.ndarray, fit: np.ndarray, points: np.ndarray, beta: float, grid: GridSpec):
    """Minimize sum_c w_c [fit[c, g_c] + beta KL(points[g_c] || h)] over columns g_c and grid h."""
    n_cols, n_pts = fit.shape
    _require_budget(n_cols * n_pts * n_pts, grid)
    neg_entropy = np.sum(xlogy(points, points), axis=1)
    best = (np.inf, None, None)
    chunk = max(1, _BATCH // n_pts)
    for start in range(0, n_pts, chunk):
        hs = points[start:start + chunk]                       # [H, d]
        with np.errstate(divide="ignore"):
            cross = xlogy(points[:, None, :], hs[None, :, :]).sum(axis=2)   # [G, H]
        leak = neg_entropy[:, None] - cross
        cost = fit[:, :, None] + beta * leak[None]             # [C, G, H]
        choice = np.argmin(cost, axis=1)                       # [C, H]
        per_h = np.take_along_axis(cost, choice[:, None, :], axis=1)[:, 0, :]
        totals = np.sum(np.where(weights[:, None] > 0, weights[:, None] * per_h, 0.0), axis=0)
        j = int(np.argmin(totals))
        if totals[j] < best[0]:
            best = (float(totals[j]), choice[:, j], start + j)
    return points[best[1]].T, n_cols * n_pts * n_pts


def _frequencies(r) -> Distribution:
    from .special import as_distribution
    return as_distribution(r)


def grid_search_oil_y(r: Union[Distribution, list], beta2: float, grid: GridSpec, method: str = "exhaustive",
                      csv_path: Optional[Union[str, Path]] = None) -> OracleResult:
    """Global minimizer of -sum_y r_y log P_yy + beta2 I(Y~; Y) over grid kernels P.

    ``csv_path`` (exhaustive method only) dumps every grid point and its
    objective, one row per kernel with the matrix in column-major order.
    """
    r = _frequencies(r)
    a = r.alphabet.size
    _check_dims(a, grid)
    if beta2 < 0:
        raise DomainError("beta2 must be non-negative")
    px, ks = r.probs, np.eye(a)
    if method == "exhaustive":
        handle = open(csv_path, "w", newline="") if csv_path else None
        try:
            writer = csv.writer(handle) if handle else None
            if writer:
                writer.writerow([f"P{y}{yt}" for yt in range(a) for y in range(a)] + ["objective"])
            _, k2, _, evals = _exhaustive(px, ks, 0, a, 0.0, beta2, grid, writer)
        finally:
            if handle:
                handle.close()
    elif method == "split":
        points = simplex_grid(a, grid.resolution)
        with np.errstate(divide="ignore"):
            fit = -np.log(points.T)                            # [column y~, grid point]: -log P(y~|y~)
        k2, evals = _split(px, fit, points, beta2, grid)
    else:
        raise DomainError(f"unknown method {method!r}")
    value = float(batch_objective(px, ks, None, k2[None], 0.0, beta2)[0])
    return OracleResult(None, Kernel(r.alphabet, r.alphabet, k2), value, evals)


def grid_search_oil_x(px: Distribution, f, beta1: float, grid: GridSpec, method: str = "exhaustive") -> OracleResult:
    """Global minimizer of E KL(K*(.|X) || K*K1(.|X)) + beta1 I(X; X~) over grid kernels K1.

    ``f`` may be a DeterministicModel or any model Kernel.
    """
    ks = as_kernel(f)
    n = px.alphabet.size
    if ks.input_alphabet != px.alphabet:
        raise ShapeError("model input alphabet differs from the query alphabet")
    _check_dims(n, grid)
    if beta1 < 0:
        raise DomainError("beta1 must be non-negative")
    p, km = px.probs, ks.matrix
    if method == "exhaustive":
        k1, _, _, evals = _exhaustive(p, km, n, 0, beta1, 0.0, grid)
    elif method == "split":
        points = simplex_grid(n, grid.resolution)
        eff = km @ points.T                                    # [y, grid point]
        with np.errstate(divide="ignore"):
            fit = np.stack([np.sum(xlogy(km[:, [x]], km[:, [x]]) - xlogy(km[:, [x]], eff), axis=0)
                            for x in range(n)])
        k1, evals = _split(p, fit, points, beta1, grid)
    else:
        raise DomainError(f"unknown method {method!r}")
    value = float(batch_objective(p, km, k1[None], None, beta1, 0.0)[0])
    return OracleResult(Kernel(px.alphabet, px.alphabet, k1), None, value, evals)


def exhaustive_objective_scan(px: Distribution, kstar, beta1: float, beta2: float, grid: GridSpec) -> OracleResult:
    """Joint global minimizer over grid pairs (K1, K2); practical for binary alphabets only."""
    ks = as_kernel(kstar)
    n, m = ks.input_alphabet.size, ks.output_alphabet.size
    if ks.input_alphabet != px.alphabet:
        raise ShapeError("model input alphabet differs from the query alphabet")
    _check_dims(max(n, m), grid)
    if beta1 < 0 or beta2 < 0:
        raise DomainError("betas must be non-negative")
    k1, k2, _, evals = _exhaustive(px.probs, ks.matrix, n, m, beta1, beta2, grid)
    value = float(batch_objective(px.probs, ks.matrix, k1[None], k2[None], beta1, beta2)[0])
    return OracleResult(Kernel(px.alphabet, ks.input_alphabet, k1),
                        Kernel(ks.output_alphabet, ks.output_alphabet, k2), value, evals)


def grid_search_oil_y_general(px: Distribution, kstar, beta2: float, grid: GridSpec) -> OracleResult:
    """Output-only minimizer for a stochastic model (exhaustive; columns do not separate)."""
    ks = as_kernel(kstar)
    m = ks.output_alphabet.size
    if ks.input_alphabet != px.alphabet:
        raise ShapeError("model input alphabet differs from the query alphabet")
    _check_dims(m, grid)
    _, k2, _, evals = _exhaustive(px.probs, ks.matrix, 0, m, 0.0, beta2, grid)
    value = float(batch_objective(px.probs, ks.matrix, None, k2[None], 0.0, beta2)[0])
    return OracleResult(None, Kernel(ks.output_alphabet, ks.output_alphabet, k2), value, evals)

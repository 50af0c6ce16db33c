"""Benchmarks and evaluation: random baselines, tradeoff sweeps, Monte Carlo
agreement, a model-extraction simulator and the output quantizer."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .engine import OilConfig, objective_arrays, oil_optimize
from .errors import DegenerateInputError, DomainError, LaunderError, ShapeError
from .prob import (
    Alphabet,
    DeterministicModel,
    Distribution,
    Kernel,
    as_kernel,
    expected_kl,
    sample_columns,
)
from .special import oil_x, oil_y_general

log = logging.getLogger(__name__)

MODES = ("joint", "output_only", "input_only")


@dataclass(frozen=True)
class DirichletSpec:
    a_param: float
    b_param: float
    alphabet_size: int
    seed: int = 0

    def __post_init__(self):
        if not (self.a_param > 0 and self.b_param > 0):
            raise DomainError("Dirichlet parameters must be positive")
        if self.alphabet_size < 1:
            raise DomainError("alphabet_size must be >= 1")


def dirichlet_kernel(spec: DirichletSpec, alphabet: Optional[Alphabet] = None) -> Kernel:
    """Random kernel whose column j ~ Dirichlet(b, ..., b, a, b, ..., b) with ``a`` at row j.

    Columns are normalized independent Gamma draws from one seeded generator.
    """
    n = spec.alphabet_size
    alphabet = alphabet or Alphabet.of_size(n)
    if alphabet.size != n:
        raise ShapeError("alphabet size differs from spec.alphabet_size")
    conc = np.full((n, n), float(spec.b_param))
    np.fill_diagonal(conc, spec.a_param)
    rng = np.random.default_rng(spec.seed)
    draws = rng.standard_gamma(conc)
    return Kernel(alphabet, alphabet, draws / draws.sum(axis=0, keepdims=True))


@dataclass(frozen=True)
class TradeoffPoint:
    beta: float
    utility_kl: float
    mi_input: float
    mi_output: float
    objective: float
    empirical_agreement: float

    def __post_init__(self):
        values = (self.beta, self.utility_kl, self.mi_input, self.mi_output,
                  self.objective, self.empirical_agreement)
        if not all(np.isfinite(v) for v in values):
            raise DomainError(f"tradeoff point has non-finite entries: {values}")
        if not 0.0 <= self.empirical_agreement <= 1.0:
            raise DomainError("empirical_agreement must lie in [0, 1]")


@dataclass(frozen=True)
class TradeoffCurve:
    points: tuple

    def __post_init__(self):
        points = tuple(self.points)
        betas = [p.beta for p in points]
        if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
            raise DomainError(f"curve betas must be strictly increasing, got {betas}")
        object.__setattr__(self, "points", points)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points])

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


def _check_laundering_chain(kstar: Kernel, k1: Kernel, k2: Kernel, px: Distribution):
    if not (px.alphabet == k1.input_alphabet and k1.output_alphabet == kstar.input_alphabet
            and kstar.output_alphabet == k2.input_alphabet):
        raise ShapeError("query distribution, K1, model and K2 alphabets do not chain")
    if k2.output_alphabet != kstar.output_alphabet:
        raise ShapeError("agreement needs K2 to map the model outputs onto themselves")


def monte_carlo_agreement(kstar, k1: Kernel, k2: Kernel, px: Distribution, n_samples: int, seed: int) -> float:
    """Fraction of sampled queries where the laundered answer equals the authentic one.

    The authentic answer y* ~ K*(.|x) and the model call inside the cascade,
    ỹ ~ K*(.|x~), share one uniform per sample (common random numbers), so
    identity kernels agree on every sample and deterministic models are
    unaffected by the coupling.
    """
    kstar = as_kernel(kstar)
    _check_laundering_chain(kstar, k1, k2, px)
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    xs = sample_columns(px.probs[:, None], np.zeros(n_samples, dtype=int), rng)
    u_model = rng.random(n_samples)
    x_tilde = sample_columns(k1.matrix, xs, rng)
    y_star = _inverse_cdf(kstar.matrix, xs, u_model)
    y_tilde = _inverse_cdf(kstar.matrix, x_tilde, u_model)
    y = sample_columns(k2.matrix, y_tilde, rng)
    return float(np.mean(y == y_star))


def _inverse_cdf(matrix: np.ndarray, columns: np.ndarray, u: np.ndarray) -> np.ndarray:
    # same convention as prob.sample_columns, with caller-supplied uniforms
    cdf = np.cumsum(matrix, axis=0)
    n = matrix.shape[0]
    last = n - 1 - np.argmax((matrix > 0)[::-1, :], axis=0)
    cdf[np.arange(n)[:, None] >= last[None, :]] = np.inf
    return (u[None, :] >= cdf[:, columns]).sum(axis=0)


def exact_agreement(f: DeterministicModel, k1: Kernel, k2: Kernel, px: Distribution) -> float:
    """sum_x p(x) K(f(x) | x) for a deterministic model."""
    from .prob import one_hot_kernel
    eff = k2.matrix @ one_hot_kernel(f).matrix @ k1.matrix
    return float(sum(px.probs[x] * eff[f.map[x], x] for x in range(len(f.map))))


def surrogate_extraction(kstar, k1: Kernel, k2: Kernel, px: Distribution, n_queries: int, seed: int):
    """Simulate an attacker fitting the answer distribution from laundered queries.

    Returns the add-one-smoothed empirical kernel K̂ (Y x X) and the fidelity
    expected_kl(px, kstar, K̂): small means the model was extracted.
    """
    kstar = as_kernel(kstar)
    _check_laundering_chain(kstar, k1, k2, px)
    if n_queries < 1:
        raise DomainError("n_queries must be >= 1")
    rng = np.random.default_rng(seed)
    xs = sample_columns(px.probs[:, None], np.zeros(n_queries, dtype=int), rng)
    x_tilde = sample_columns(k1.matrix, xs, rng)
    y_tilde = sample_columns(kstar.matrix, x_tilde, rng)
    y = sample_columns(k2.matrix, y_tilde, rng)
    counts = np.ones(kstar.shape)
    np.add.at(counts, (y, xs), 1.0)
    estimate = Kernel(kstar.input_alphabet, kstar.output_alphabet, counts / counts.sum(axis=0, keepdims=True))
    return estimate, expected_kl(px, kstar, estimate)


def _solve(px: Distribution, kstar: Kernel, beta: float, mode: str, config: OilConfig):
    """Kernels for one sweep point; beta = 0 is the identity pair."""
    ident1, ident2 = Kernel.identity(kstar.input_alphabet), Kernel.identity(kstar.output_alphabet)
    if beta == 0:
        return ident1, ident2, (0.0, 0.0)
    if mode == "output_only":
        res = oil_y_general(px, kstar, beta, max_iters=config.max_iters, tol=config.tol, safeguard=config.safeguard)
        return ident1, res.kernel, (0.0, beta)
    if mode == "input_only":
        res = oil_x(px, kstar, beta, max_iters=config.max_iters, tol=config.tol, safeguard=config.safeguard)
        return res.kernel, ident2, (beta, 0.0)
    sol = oil_optimize(px, kstar, replace(config, beta1=beta, beta2=beta))
    return sol.k1, sol.k2, (beta, beta)


def sweep(px: Distribution, kstar, betas: Sequence[float], mode: str = "output_only",
          config: Optional[OilConfig] = None, seed: int = 0, n_samples: int = 10000) -> TradeoffCurve:
    """Solve the laundering problem along a beta grid and tabulate the tradeoff.

    ``joint`` uses the same beta for both interfaces.  The objective column
    uses the weights the solver actually optimized (the pinned side has
    weight 0).  Every point's agreement uses the same seed.
    """
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    betas = [float(b) for b in betas]
    if not betas:
        raise DomainError("betas must be non-empty")
    if any(not np.isfinite(b) or b < 0 for b in betas):
        raise DomainError(f"betas must be finite and non-negative, got {betas}")
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise DomainError(f"betas must be strictly increasing, got {betas}")
    kstar = as_kernel(kstar)
    config = config or OilConfig(1.0, 1.0, max_iters=5000, tol=1e-12)
    points = []
    for beta in betas:
        try:
            k1, k2, (b1, b2) = _solve(px, kstar, beta, mode, config)
            obj, ekl, mi_in, mi_out = objective_arrays(px.probs, kstar.matrix, k1.matrix, k2.matrix, b1, b2)
            agreement = monte_carlo_agreement(kstar, k1, k2, px, n_samples, seed)
        except LaunderError as exc:
            exc.beta = beta
            exc.args = (f"beta={beta:g}: {exc}",)
            raise
        log.info("beta=%g utility_kl=%.6g mi_output=%.6g", beta, ekl, mi_out)
        points.append(TradeoffPoint(beta, max(float(ekl), 0.0), max(float(mi_in), 0.0), max(float(mi_out), 0.0),
                                    float(obj), agreement))
    return TradeoffCurve(tuple(points))


@dataclass(frozen=True)
class BenchmarkRow:
    a_param: float
    b_param: float
    replications: int
    point: TradeoffPoint


def dirichlet_benchmark(px: Distribution, kstar, pairs: Iterable, replications: int = 50, seed: int = 0,
                        n_samples: int = 10000, beta2: float = 1.0) -> list:
    """Random output-kernel baseline: mean metrics of Dirichlet K2 draws per (a, b).

    K1 is the identity.  ``beta2`` only weights the objective column (and is
    reported as the row's beta).  Replication seeds are spawned from ``seed``
    per pair, so adding a pair does not change the others.
    """
    kstar = as_kernel(kstar)
    if replications < 1:
        raise DomainError("replications must be >= 1")
    m = kstar.output_alphabet.size
    ident1 = Kernel.identity(kstar.input_alphabet)
    pairs = [(float(a), float(b)) for a, b in pairs]
    rows = []
    for (a, b), pair_seq in zip(pairs, _spawn(seed, len(pairs))):
        metrics = []
        for rep_seq in pair_seq.spawn(replications):
            draw_seed, mc_seed = (int(v) for v in rep_seq.generate_state(2))
            k2 = dirichlet_kernel(DirichletSpec(a, b, m, draw_seed), kstar.output_alphabet)
            obj, ekl, mi_in, mi_out = objective_arrays(px.probs, kstar.matrix, ident1.matrix, k2.matrix, 0.0, beta2)
            agree = monte_carlo_agreement(kstar, ident1, k2, px, n_samples, mc_seed)
            metrics.append((ekl, mi_in, mi_out, obj, agree))
        ekl, mi_in, mi_out, obj, agree = np.mean(metrics, axis=0)
        rows.append(BenchmarkRow(a, b, replications,
                                 TradeoffPoint(float(beta2), float(ekl), float(mi_in), float(mi_out), float(obj),
                                               min(max(float(agree), 0.0), 1.0))))
    return rows


def _spawn(seed: int, count: int):
    return np.random.SeedSequence(seed).spawn(count)


@dataclass(frozen=True)
class QuantizerConfig:
    mu: float
    sigma: float
    n_points: int = 30

    def __post_init__(self):
        if not np.isfinite(self.mu) or not (np.isfinite(self.sigma) and self.sigma > 0):
            raise DomainError("quantizer needs finite mu and positive finite sigma")
        if self.n_points < 1:
            raise DomainError("n_points must be >= 1")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(self.mu - 3 * self.sigma, self.mu + 3 * self.sigma, self.n_points)


def quantize(values: Union[float, Sequence[float]], config: QuantizerConfig):
    """Index of the nearest grid point; out-of-range values clamp, exact midpoints round down.

    A scalar gives an int, a sequence a list of ints.
    """
    scalar = np.ndim(values) == 0
    v = np.atleast_1d(np.asarray(values, dtype=float))
    if not np.all(np.isfinite(v)):
        raise DomainError("cannot quantize non-finite values")
    grid = config.grid
    upper = np.clip(np.searchsorted(grid, v, side="left"), 1, max(len(grid) - 1, 1))
    if len(grid) == 1:
        idx = np.zeros(len(v), dtype=int)
    else:
        lower = upper - 1
        below = v - grid[lower]
        above = grid[upper] - v
        # grid points are computed, so a true midpoint can miss by an ulp or two
        slack = 1e-12 * max(1.0, float(np.max(np.abs(grid))))
        idx = np.where(below <= above + slack, lower, upper)
    return int(idx[0]) if scalar else [int(i) for i in idx]


def estimate_r(observed: Sequence, alphabet: Alphabet) -> Distribution:
    """Empirical frequency of ``observed`` symbols (labels, or anything whose str is a label)."""
    if len(observed) == 0:
        raise DegenerateInputError("cannot estimate frequencies from an empty stream")
    counts = np.zeros(alphabet.size)
    for symbol in observed:
        counts[alphabet.index(symbol)] += 1
    return Distribution(alphabet, counts / counts.sum())


def synthetic_classifier(r: Sequence[float], inputs_per_class: int = 2):
    """Deterministic classifier whose output frequencies are exactly ``r``.

    Each class owns ``inputs_per_class`` inputs of equal query probability.
    Returns (px, f).
    """
    r = np.asarray(r, dtype=float)
    m = len(r)
    xs = Alphabet(tuple(f"x{i}" for i in range(m * inputs_per_class)))
    ys = Alphabet(tuple(f"c{j}" for j in range(m)))
    fmap = np.repeat(np.arange(m), inputs_per_class)
    probs = np.repeat(r / r.sum() / inputs_per_class, inputs_per_class)
    return Distribution(xs, probs / probs.sum()), DeterministicModel(xs, ys, fmap)

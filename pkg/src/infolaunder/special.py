"""Output-only and input-only laundering, plus the deterministic-model shortcuts.

``oil_y`` is the matrix-form iteration for a deterministic model, driven by
the output frequencies ``r`` alone.  ``oil_y_general`` and ``oil_x`` handle an
arbitrary model kernel with the other side pinned to the identity.  All three
take one evaluation of the optimality right-hand side per iteration and, by
default, shorten the step geometrically when it would increase the surrogate
objective (see :func:`infolaunder.engine.minimize_block`); pass
``safeguard=False`` for the plain fixed-point iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import xlogy

from .engine import (
    _normalize_log_columns,
    _rel_entropy_rows,
    check_model,
    diagonal_column_costs,
    is_one_hot,
    minimize_block,
)
from .errors import DegenerateInputError, DomainError, NumericalFailure, ShapeError
from .prob import (
    Alphabet,
    DeterministicModel,
    Distribution,
    Kernel,
    as_kernel,
    expected_kl_array,
    mi_array,
    one_hot_kernel,
    pushforward,
)


@dataclass(frozen=True)
class OilYInput:
    r: Distribution
    beta2: float
    max_iters: int = 1000
    tol: float = 1e-12
    safeguard: bool = True

    def __post_init__(self):
        if not np.isfinite(self.beta2) or self.beta2 < 0:
            raise DomainError(f"beta2 must be a finite non-negative number, got {self.beta2!r}")
        if self.max_iters < 1 or not self.tol > 0:
            raise DomainError("max_iters must be >= 1 and tol > 0")


@dataclass(frozen=True, eq=False)
class SpecialResult:
    """Kernel produced by a one-sided solver together with its iteration record."""

    kernel: Kernel
    objective_trace: list
    delta_trace: list
    converged: bool
    marginal: Optional[Distribution] = None
    history: list = field(default_factory=list, repr=False)

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    @property
    def iterations(self) -> int:
        return len(self.delta_trace)


def beta_zero_kernel(alphabet: Alphabet) -> Kernel:
    """Limit of vanishing leakage weight: pass symbols through untouched."""
    return Kernel.identity(alphabet)


def beta_infinity_kernel(marginal: Distribution) -> Kernel:
    """Limit of infinite leakage weight: every column equals ``marginal``."""
    return Kernel.constant(marginal.alphabet, marginal)


def as_distribution(r: Union[Distribution, Sequence[float], str, Path]) -> Distribution:
    """Accept a Distribution, an inline list of weights, or a distribution JSON file."""
    if isinstance(r, Distribution):
        return r
    if isinstance(r, (str, Path)):
        from .io import load_distribution
        return load_distribution(r)
    w = np.asarray(r, dtype=float)
    from .prob import normalize
    return normalize(w, Alphabet.of_size(len(w)))


# ---------------------------------------------------------------------------
# OIL-Y, matrix form


def oil_y_objective(P: np.ndarray, r: np.ndarray, beta2: float, q: Optional[np.ndarray] = None) -> float:
    """Surrogate for output-only laundering of a deterministic model.

    With ``q`` omitted (``q = P r``) this is the objective itself:
    -sum_y r_y log P_yy + beta2 I(Y~; Y).
    """
    if q is None:
        q = P @ r
    diag = np.diag(P)
    with np.errstate(divide="ignore"):
        fit = -float(np.sum(np.where(r > 0, r * np.log(diag), 0.0)))
        logq = np.log(q)
    if not beta2:
        return fit
    leak = np.sum(xlogy(P, P) - np.where(P > 0, P * logq[:, None], 0.0), axis=0)
    return fit + beta2 * float(r @ leak)


def _oil_y_display_log(P: np.ndarray, q: np.ndarray, beta2: float) -> np.ndarray:
    a = len(q)
    logits = np.tile(np.log(q)[:, None], (1, a))   # q 1^T
    idx = np.arange(a)
    logits[idx, idx] += 1.0 / (beta2 * P[idx, idx])
    if not np.all(np.isfinite(logits[idx, idx])):
        raise NumericalFailure("diagonal underflow in the output-kernel update")
    return _normalize_log_columns(logits)


def _reinsert(P_sub: np.ndarray, support: np.ndarray, a: int) -> np.ndarray:
    P = np.eye(a)
    P[np.ix_(support, support)] = P_sub
    return P


def oil_y(spec: Union[OilYInput, Distribution, Sequence[float]], beta2: Optional[float] = None,
          max_iters: int = 1000, tol: float = 1e-12, safeguard: bool = True,
          keep_history: bool = False, seed: Optional[int] = None) -> SpecialResult:
    """Output-only laundering of a deterministic model from its output frequencies.

    Args:
        spec: an OilYInput, or the frequency vector ``r`` (Distribution,
            inline weights or a JSON path) together with ``beta2``.
        keep_history: also store every iterate ``P`` (for plots).
        seed: start from a random positive kernel (flat Dirichlet columns)
            instead of the uniform one.

    Returns:
        SpecialResult whose kernel maps Y~ -> Y; ``delta_trace[t]`` is
        ||P(t+1) - P(t)||_1 / a and ``objective_trace[0]`` belongs to the
        uniform start.  Symbols with zero frequency are removed before
        iterating and put back as fixed points.
    """
    if not isinstance(spec, OilYInput):
        spec = OilYInput(as_distribution(spec), beta2, max_iters, tol, safeguard)
    r_full = spec.r.probs
    alphabet = spec.r.alphabet
    a_full = len(r_full)
    if spec.beta2 == 0:
        P = np.eye(a_full)
        val = oil_y_objective(P, r_full, 0.0)
        return SpecialResult(Kernel.identity(alphabet), [val], [], True, spec.r)

    support = np.flatnonzero(r_full > 0)
    r = r_full[support] / r_full[support].sum()
    a = len(r)
    beta = spec.beta2
    if seed is None:
        P = np.full((a, a), 1.0 / a)
        q = np.full(a, 1.0 / a)
    else:
        P = np.random.default_rng(seed).dirichlet(np.ones(a), size=a).T
        q = P @ r
    trace = [oil_y_objective(P, r, beta)]
    deltas, history = [], []
    converged = False
    memory = {}
    for t in range(spec.max_iters):
        P_new = minimize_block(
            P,
            lambda K: _oil_y_display_log(K, q, beta),
            lambda K: oil_y_objective(K, r, beta, q),
            safeguard=spec.safeguard,
            column_values=lambda K: diagonal_column_costs(K, q, beta), memory=memory)
        delta = float(np.abs(P_new - P).sum() / a)
        P = P_new
        q = P @ r
        val = oil_y_objective(P, r, beta)
        if not np.isfinite(val):
            raise NumericalFailure(f"objective became {val} at iteration {t + 1}", iteration=t + 1)
        trace.append(val)
        deltas.append(delta)
        if keep_history:
            history.append(_reinsert(P, support, a_full))
        if delta < spec.tol:
            converged = True
            break
    P_full = _reinsert(P, support, a_full)
    q_full = P_full @ r_full
    kernel = Kernel(alphabet, alphabet, P_full)
    return SpecialResult(kernel, trace, deltas, converged, Distribution(alphabet, q_full / q_full.sum()), history)


# ---------------------------------------------------------------------------
# OIL-Y for a stochastic model


def _y_general_display_log(px, ks, K2, h2, pyt, beta2):
    eff = K2 @ ks
    ratio = np.zeros_like(ks)
    np.divide(ks, eff, out=ratio, where=ks > 0)
    score = (ratio * px[None, :]) @ ks.T           # sum_x p(x) K*(y|x) K*(y~|x) / K(y|x)
    with np.errstate(divide="ignore"):
        logits = np.log(h2)[:, None] + score / (beta2 * pyt[None, :])
    return _normalize_log_columns(logits)


def _y_general_j(px, ks, K2, h2, pyt, beta2):
    val = expected_kl_array(px, ks, K2 @ ks)
    with np.errstate(divide="ignore"):
        logh = np.log(h2)
    leak = np.sum(xlogy(K2, K2) - np.where(K2 > 0, K2 * logh[:, None], 0.0), axis=0)
    return val + beta2 * float(pyt @ leak)


def _restrict_model(px: np.ndarray, ks: np.ndarray):
    """Drop queries of zero probability and outputs the model never emits."""
    xs = np.flatnonzero(px > 0)
    pyt = ks[:, xs] @ px[xs]
    ys = np.flatnonzero(pyt > 0)
    sub = ks[np.ix_(ys, xs)]
    return xs, ys, px[xs] / px[xs].sum(), sub / sub.sum(axis=0, keepdims=True)


def oil_y_general(px: Distribution, kstar, beta2: float, max_iters: int = 1000, tol: float = 1e-12,
                  safeguard: bool = True, k2_init: Optional[Kernel] = None) -> SpecialResult:
    """Output-only laundering for an arbitrary model kernel (input kernel = identity)."""
    kstar = as_kernel(kstar)
    check_model(px, kstar)
    if not np.isfinite(beta2) or beta2 < 0:
        raise DomainError(f"beta2 must be a finite non-negative number, got {beta2!r}")
    ys_alpha = kstar.output_alphabet
    m_full = ys_alpha.size
    if beta2 == 0:
        ekl = expected_kl_array(px.probs, kstar.matrix, kstar.matrix)
        return SpecialResult(Kernel.identity(ys_alpha), [ekl], [], True, pushforward(px, kstar))
    xs, ys, p, ks = _restrict_model(px.probs, kstar.matrix)
    m = len(ys)
    pyt = ks @ p
    if k2_init is None:
        K2 = np.full((m, m), 1.0 / m)
    else:
        K2 = k2_init.matrix[np.ix_(ys, ys)]
        K2 = K2 / K2.sum(axis=0, keepdims=True)
    h2 = K2 @ pyt
    # a deterministic model makes J separate over the columns of K2
    separable = is_one_hot(ks)
    trace = [_y_general_j(p, ks, K2, h2, pyt, beta2)]
    deltas = []
    converged = False
    memory = {}
    for t in range(max_iters):
        K2_new = minimize_block(
            K2,
            lambda K: _y_general_display_log(p, ks, K, h2, pyt, beta2),
            lambda K: _y_general_j(p, ks, K, h2, pyt, beta2),
            safeguard=safeguard,
            column_values=(lambda K: diagonal_column_costs(K, h2, beta2)) if separable else None, memory=memory)
        delta = float(np.abs(K2_new - K2).sum() / m)
        K2 = K2_new
        h2 = K2 @ pyt
        val = _y_general_j(p, ks, K2, h2, pyt, beta2)
        if not np.isfinite(val):
            raise NumericalFailure(f"objective became {val} at iteration {t + 1}", iteration=t + 1)
        trace.append(val)
        deltas.append(delta)
        if delta < tol:
            converged = True
            break
    full = _reinsert(K2, ys, m_full)
    q = full @ (kstar.matrix @ px.probs)
    return SpecialResult(Kernel(ys_alpha, ys_alpha, full), trace, deltas, converged,
                         Distribution(ys_alpha, q / q.sum()))


# ---------------------------------------------------------------------------
# OIL-X


def _x_display_log(px, ks, K1, h1, beta1):
    eff = ks @ K1
    ratio = np.zeros_like(ks)
    np.divide(ks, eff, out=ratio, where=ks > 0)
    likelihood = ks.T @ ratio                       # [x~, x] = sum_y K*(y|x) K*(y|x~) / K(y|x)
    with np.errstate(divide="ignore"):
        logits = np.log(h1)[:, None] + likelihood / beta1
    return _normalize_log_columns(logits)


def _x_fiber_display_log(px, fmap, K1, h1, beta1):
    """Deterministic model: the exponent is 1{f(x) = f(x~)} over the fiber mass of x."""
    n = len(fmap)
    same = fmap[:, None] == fmap[None, :]           # [x~, x]
    fiber_mass = np.where(same, K1, 0.0).sum(axis=0)
    with np.errstate(divide="ignore"):
        logits = np.log(h1)[:, None] + np.where(same, 1.0 / (beta1 * fiber_mass[None, :]), 0.0)
    assert logits.shape == (n, n)
    return _normalize_log_columns(logits)


def _x_j(px, ks, K1, h1, beta1):
    val = expected_kl_array(px, ks, ks @ K1)
    with np.errstate(divide="ignore"):
        logh = np.log(h1)
    leak = np.sum(xlogy(K1, K1) - np.where(K1 > 0, K1 * logh[:, None], 0.0), axis=0)
    return val + beta1 * float(px @ leak)


def _x_column_costs(ks, K1, h1, beta1):
    with np.errstate(divide="ignore"):
        fit = np.sum(xlogy(ks, ks) - xlogy(ks, ks @ K1), axis=0)
    return fit + beta1 * _rel_entropy_rows(K1, h1)


def oil_x_objective(px: Distribution, kstar, k1: Kernel, beta1: float) -> float:
    ks = as_kernel(kstar).matrix
    return expected_kl_array(px.probs, ks, ks @ k1.matrix) + beta1 * mi_array(px.probs, k1.matrix)


def oil_x(px: Distribution, kstar, beta1: float, max_iters: int = 1000, tol: float = 1e-12,
          safeguard: bool = True, k1_init: Optional[Kernel] = None) -> SpecialResult:
    """Input-only laundering (output kernel = identity).

    A DeterministicModel uses the fiber form of the update, a Kernel the
    general one; both describe the same iteration.
    """
    deterministic = isinstance(kstar, DeterministicModel)
    ks_kernel = as_kernel(kstar)
    check_model(px, ks_kernel)
    if not np.isfinite(beta1) or beta1 < 0:
        raise DomainError(f"beta1 must be a finite non-negative number, got {beta1!r}")
    alphabet = ks_kernel.input_alphabet
    n = alphabet.size
    p, ks = px.probs, ks_kernel.matrix
    if beta1 == 0:
        return SpecialResult(Kernel.identity(alphabet), [0.0 if deterministic else expected_kl_array(p, ks, ks)],
                             [], True, px)
    K1 = np.full((n, n), 1.0 / n) if k1_init is None else k1_init.matrix.copy()
    h1 = K1 @ p
    if deterministic:
        fmap = np.asarray(kstar.map)
        display = lambda K: _x_fiber_display_log(p, fmap, K, h1, beta1)
    else:
        display = lambda K: _x_display_log(p, ks, K, h1, beta1)
    trace = [_x_j(p, ks, K1, h1, beta1)]
    deltas = []
    converged = False
    memory = {}
    for t in range(max_iters):
        K1_new = minimize_block(K1, display, lambda K: _x_j(p, ks, K, h1, beta1), safeguard=safeguard,
                                column_values=lambda K: _x_column_costs(ks, K, h1, beta1), memory=memory)
        delta = float(np.abs(K1_new - K1).sum() / n)
        K1 = K1_new
        h1 = K1 @ p
        val = _x_j(p, ks, K1, h1, beta1)
        if not np.isfinite(val):
            raise NumericalFailure(f"objective became {val} at iteration {t + 1}", iteration=t + 1)
        trace.append(val)
        deltas.append(delta)
        if delta < tol:
            converged = True
            break
    return SpecialResult(Kernel(alphabet, alphabet, K1), trace, deltas, converged,
                         Distribution(alphabet, h1 / h1.sum()))


# ---------------------------------------------------------------------------
# joint updates for a deterministic model


def joint_deterministic_updates(state, px: Distribution, f: DeterministicModel,
                                beta1: float, beta2: float):
    """One evaluation of both optimality equations for a deterministic model.

    Sums over queries collapse to sums over the fibers of ``f``.  Both
    kernels are evaluated at ``state`` (K1 from ``state.k1``, marginals from
    the state), matching :func:`infolaunder.engine.update_k1` and
    :func:`infolaunder.engine.update_k2` on ``one_hot_kernel(f)``.
    """
    if f.input_alphabet != px.alphabet:
        raise ShapeError("model input alphabet differs from the query alphabet")
    if not (beta1 > 0 and beta2 > 0):
        raise DomainError("joint updates need beta1 > 0 and beta2 > 0")
    fmap = np.asarray(f.map)
    n, m = f.input_alphabet.size, f.output_alphabet.size
    K1, K2 = state.k1.matrix, state.k2.matrix
    h1, h2, pyt = state.marg_xtilde.probs, state.marg_y.probs, state.marg_ytilde.probs
    p = px.probs
    if np.any(pyt <= 0):
        raise DegenerateInputError("K2 update: a model output symbol has zero marginal mass")

    # K(y|x) = sum_x~ K1(x~|x) K2(y|f(x~)); only y = f(x) is needed
    eff_fx = np.array([K1[:, x] @ K2[fmap[x], fmap] for x in range(n)])
    like = K2[fmap[None, :], fmap[:, None]] / eff_fx[None, :]       # [x~, x]: K2(f(x)|f(x~)) / K(f(x)|x)
    with np.errstate(divide="ignore"):
        logh2 = np.log(h2)
    row_leak = np.sum(xlogy(K2, K2) - np.where(K2 > 0, K2 * logh2[:, None], 0.0), axis=0)
    with np.errstate(divide="ignore"):
        logits1 = np.log(h1)[:, None] + like / beta1 - (beta2 / beta1) * row_leak[fmap][:, None]
    new_k1 = np.exp(_normalize_log_columns(logits1))

    # A(y~|x) = mass K1 puts on the fiber of y~
    fiber = np.zeros((m, n))
    np.add.at(fiber, fmap, K1)
    score = np.zeros((m, m))
    for x in range(n):
        if p[x] > 0:
            score[fmap[x], :] += p[x] * fiber[:, x] / eff_fx[x]
    with np.errstate(divide="ignore"):
        logits2 = logh2[:, None] + score / (beta2 * pyt[None, :])
    new_k2 = np.exp(_normalize_log_columns(logits2))
    return (Kernel(state.k1.input_alphabet, state.k1.output_alphabet, new_k1),
            Kernel(state.k2.input_alphabet, state.k2.output_alphabet, new_k2))


def r_from_model(px: Distribution, f: DeterministicModel) -> Distribution:
    """Output frequencies r_y = P(f(X) = y)."""
    return pushforward(px, one_hot_kernel(f))

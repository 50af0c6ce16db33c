"""Joint input/output laundering: the alternating optimizer.

The optimizer minimizes

    L(K1, K2) = E_x KL(K*(.|x) || K(.|x)) + beta1 I(X; X~) + beta2 I(Y~; Y)

with K = K1 -> K* -> K2, by block-coordinate descent on the surrogate
J(K1, K2, h1, h2), in which the marginals of X~ and Y are replaced by free
distributions h1, h2.  Each outer iteration

1. minimizes J over K1 (columns independent),
2. minimizes J over K2 using the freshly updated K1,
3. resets h1, h2 to the marginals induced by the new kernels,

so L is non-increasing.  The optimality equations for K1 and K2 are implicit
(the right-hand side depends on the kernel itself through K), so a block
minimization repeatedly evaluates the right-hand side ("display") and moves
toward it geometrically, halving the step whenever J would go up.  A full
step is exactly one evaluation of the display.

Arrays follow the ``[out, in]`` orientation of :mod:`infolaunder.prob`.
Input and output alphabets of K1 (and of K2) coincide, since the KL term
compares K*(.|x) and K(.|x) over the same output symbols.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import xlogy

from .errors import DegenerateInputError, DomainError, NumericalFailure, PositivityError, ShapeError
from .prob import (
    Distribution,
    Kernel,
    as_kernel,
    cascade,
    expected_kl_array,
    mi_array,
)

log = logging.getLogger(__name__)

# J may rise by this much (relative) per accepted inner step; J is only
# evaluated to a few ulps, and rejecting sub-ulp changes stalls the inner solve.
J_SLACK = 1e-14


@dataclass(frozen=True)
class OilConfig:
    beta1: float
    beta2: float
    max_iters: int = 1000
    tol: float = 1e-10
    restarts: int = 0
    init: str = "random"
    seed: int = 0
    inner_iters: int = 1
    inner_tol: float = 1e-14
    safeguard: bool = True

    def __post_init__(self):
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise DomainError(f"{name} must be a finite non-negative number, got {value!r}")
        if self.max_iters < 1:
            raise DomainError("max_iters must be >= 1")
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.restarts < 0:
            raise DomainError("restarts must be >= 0")
        if self.init not in ("uniform", "random"):
            raise DomainError(f"init must be 'uniform' or 'random', got {self.init!r}")


@dataclass(frozen=True)
class AlgorithmState:
    k1: Kernel
    k2: Kernel
    marg_xtilde: Distribution
    marg_y: Distribution
    marg_ytilde: Distribution
    iter: int = 0

    @classmethod
    def induced(cls, px: Distribution, kstar: Kernel, k1: Kernel, k2: Kernel, iter: int = 0) -> "AlgorithmState":
        """State whose marginals are the ones generated by ``(px, k1, kstar, k2)``."""
        pxt = k1.matrix @ px.probs
        pyt = kstar.matrix @ pxt
        py = k2.matrix @ pyt
        return cls(k1, k2,
                   Distribution(k1.output_alphabet, pxt / pxt.sum()),
                   Distribution(k2.output_alphabet, py / py.sum()),
                   Distribution(kstar.output_alphabet, pyt / pyt.sum()),
                   iter)


@dataclass(frozen=True, eq=False)
class OilSolution:
    k1: Kernel
    k2: Kernel
    effective: Kernel
    objective_trace: list
    delta_trace: list
    converged: bool
    residual: float
    config: Optional[OilConfig] = None
    utility_kl: float = float("nan")
    mi_input: float = float("nan")
    mi_output: float = float("nan")
    restart_objectives: list = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]

    @property
    def iterations(self) -> int:
        return len(self.delta_trace)


# ---------------------------------------------------------------------------
# array-level building blocks


def check_chain(px: Distribution, kstar: Kernel, k1: Kernel, k2: Kernel):
    if k1.input_alphabet != px.alphabet:
        raise ShapeError("K1 input alphabet differs from the query alphabet")
    if k1.output_alphabet != kstar.input_alphabet:
        raise ShapeError("K1 output alphabet differs from the model input alphabet")
    if k2.input_alphabet != kstar.output_alphabet:
        raise ShapeError("K2 input alphabet differs from the model output alphabet")
    check_model(px, kstar)
    if k2.output_alphabet != kstar.output_alphabet:
        raise ShapeError("K2 must map the model output alphabet onto itself")


def check_model(px: Distribution, kstar: Kernel):
    if kstar.input_alphabet != px.alphabet:
        raise ShapeError("laundering needs the model input alphabet to equal the query alphabet")


def _safe_ratio(num: np.ndarray, den: np.ndarray, what: str) -> np.ndarray:
    """num / den with 0/0 = 0; a positive numerator over a zero denominator raises."""
    if np.any((den <= 0) & (num > 0)):
        raise PositivityError(f"{what}: effective kernel vanishes where the model has mass")
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=num > 0)
    return out


def _rel_entropy_rows(k: np.ndarray, h: np.ndarray) -> np.ndarray:
    """For each column j: sum_i k[i, j] log(k[i, j] / h[i])."""
    with np.errstate(divide="ignore"):
        logh = np.log(h)
    return np.sum(xlogy(k, k) - np.where(k > 0, k * logh[:, None], 0.0), axis=0)


def objective_arrays(px, ks, k1, k2, beta1, beta2) -> tuple:
    """Return (L, expected KL, I(X;X~), I(Y~;Y))."""
    eff = k2 @ ks @ k1
    ekl = expected_kl_array(px, ks, eff)
    mi_in = mi_array(px, k1)
    mi_out = mi_array(ks @ (k1 @ px), k2)
    return ekl + beta1 * mi_in + beta2 * mi_out, ekl, mi_in, mi_out


def j_arrays(px, ks, k1, k2, h1, h2, beta1, beta2) -> float:
    eff = k2 @ ks @ k1
    pyt = ks @ (k1 @ px)
    val = expected_kl_array(px, ks, eff)
    if beta1:
        val += beta1 * float(px @ _rel_entropy_rows(k1, h1))
    if beta2:
        val += beta2 * float(pyt @ _rel_entropy_rows(k2, h2))
    return val


def k1_column_costs(px, ks, k1, k2, h1, h2, beta1, beta2) -> np.ndarray:
    """Per-query-column terms of J in K1 (J = sum_x px(x) cost[x])."""
    eff = k2 @ ks @ k1
    with np.errstate(divide="ignore"):
        cost = np.sum(xlogy(ks, ks) - xlogy(ks, eff), axis=0)
    cost = cost + beta1 * _rel_entropy_rows(k1, h1)
    if beta2:
        cost = cost + beta2 * ((ks.T @ _rel_entropy_rows(k2, h2)) @ k1)
    return cost


def diagonal_column_costs(k2, h2, beta2) -> np.ndarray:
    """Per-column terms of J in K2 when the answer reaching K2 is the authentic one
    (deterministic model, identity K1): -log K2(y~|y~) + beta2 KL(K2(.|y~) || h2)."""
    with np.errstate(divide="ignore"):
        fit = -np.log(np.diag(k2))
    return fit + beta2 * _rel_entropy_rows(k2, h2)


def is_one_hot(matrix: np.ndarray) -> bool:
    return bool(np.all((matrix == 0) | (matrix == 1)))


def _normalize_log_columns(logits: np.ndarray) -> np.ndarray:
    top = np.max(logits, axis=0, keepdims=True)
    shifted = logits - top
    return shifted - np.log(np.sum(np.exp(shifted), axis=0, keepdims=True))


def k1_display_log(px, ks, k1, k2, h1, h2, beta1, beta2) -> np.ndarray:
    """Log of the K1 optimality right-hand side, normalized over x~ per column x."""
    mid = k2 @ ks                       # p(y | x~) through K* then K2
    eff = mid @ k1                      # p(y | x)
    ratio = _safe_ratio(ks, eff, "K1 update")
    likelihood = mid.T @ ratio          # [x~, x] = sum_y K*(y|x) mid(y|x~) / eff(y|x)
    leak = ks.T @ _rel_entropy_rows(k2, h2) if beta2 else np.zeros(ks.shape[1])
    with np.errstate(divide="ignore"):
        logits = np.log(h1)[:, None] + likelihood / beta1 - (beta2 / beta1) * leak[:, None]
    return _normalize_log_columns(logits)


def k2_display_log(px, ks, k1, k2, h2, pyt, beta2, strict=True) -> np.ndarray:
    """Log of the K2 optimality right-hand side, normalized over y per column y~.

    Columns whose symbol y~ never occurs (zero marginal) have no right-hand
    side; they raise, or with ``strict=False`` are returned unchanged.
    """
    empty = pyt <= 0
    if np.any(empty):
        if strict:
            raise DegenerateInputError("K2 update: a model output symbol has zero marginal mass")
        with np.errstate(divide="ignore"):
            out = np.log(k2)
        keep = ~empty
        pos = k2_display_log(px, ks, k1, k2, h2, np.where(empty, 1.0, pyt), beta2)
        out[:, keep] = pos[:, keep]
        return out
    front = ks @ k1                     # p(y~ | x)
    eff = k2 @ front
    ratio = _safe_ratio(ks, eff, "K2 update") * px[None, :]
    score = ratio @ front.T             # [y, y~] = sum_x p(x) K*(y|x) front(y~|x) / eff(y|x)
    with np.errstate(divide="ignore"):
        logits = np.log(h2)[:, None] + score / (beta2 * pyt[None, :])
    return _normalize_log_columns(logits)


def _interpolate_log(log_cur: np.ndarray, target: np.ndarray, alpha) -> np.ndarray:
    mix = np.where(np.isfinite(log_cur), (1 - alpha) * log_cur, -np.inf) + alpha * target
    return _normalize_log_columns(mix)


def _column_steps(current, display_log, column_values, max_steps, tol, memory):
    """Per-column safeguard for blocks whose J is a weighted sum of column costs.

    Each column keeps its own step size in ``memory`` across calls.  The
    gradient of a column cost is proportional to ``log k - display_log``
    (plus a constant that cancels on the simplex), so the display computed
    at the start of a step also tells whether the previous step went past
    the line minimum.  An overshooting column halves its step, any other
    grows it by half (up to the full step); a partial step mixes the column
    linearly with its display, which unlike a geometric mix can leave the
    boundary of the simplex.  This damps the two-cycles the
    plain iteration falls into, which a value test alone cannot see once
    their cost changes drop below rounding.  On top of that a column never
    accepts a step that raises its own cost.
    """
    with np.errstate(divide="ignore"):
        log_cur = np.log(current)
    vals = column_values(current)
    alpha = np.array(memory.get("alpha", np.ones(current.shape[1])), dtype=float)
    prev = memory.get("step")
    for _ in range(max_steps):
        target = display_log(current)
        if prev is not None:
            with np.errstate(invalid="ignore"):
                slope = np.nansum(np.where(prev != 0, (log_cur - target) * prev, 0.0), axis=0)
            alpha = np.where(slope > 0, 0.5 * alpha, np.minimum(1.0, 1.5 * alpha))
        display = np.exp(target)
        cand = np.where(alpha < 1.0, (1 - alpha) * current + alpha * display, display)
        while True:
            cand_vals = column_values(cand)
            bad = ~(cand_vals <= vals + J_SLACK * np.maximum(1.0, np.abs(vals))) & np.any(cand != current, axis=0)
            if not np.any(bad):
                break
            alpha = np.where(bad, 0.5 * alpha, alpha)
            give_up = bad & (alpha < 1e-12)
            redo = bad & ~give_up
            cand[:, give_up] = current[:, give_up]
            cand[:, redo] = (1 - alpha[redo]) * current[:, redo] + alpha[redo] * display[:, redo]
        prev = cand - current
        change = float(np.max(np.abs(prev)))
        with np.errstate(divide="ignore"):
            current, log_cur, vals = cand, np.log(cand), cand_vals
        if change < tol:
            break
    memory["alpha"], memory["step"] = alpha, prev
    return current


def minimize_block(current: np.ndarray, display_log: Callable, value: Callable,
                   max_steps: int = 1, tol: float = 0.0, safeguard: bool = True,
                   column_values: Optional[Callable] = None, memory: Optional[dict] = None) -> np.ndarray:
    """Minimize a convex block of J by safeguarded steps toward its display.

    ``display_log(k)`` returns the log of the optimality right-hand side at
    ``k``; ``value(k)`` evaluates J.  A step of size ``alpha`` moves to the
    column-normalized geometric interpolation ``k**(1-alpha) * display**alpha``
    (mirror descent with step ``alpha / beta``); ``alpha`` starts at 1, is
    halved until J does not increase, and grows back after each success.
    With ``safeguard=False`` every step is the full display.

    If the block's J separates over columns, pass ``column_values(k)``
    returning each column's cost; steps are then sized column by column
    (see :func:`_column_steps`), with ``memory`` carrying the step sizes
    from one call to the next.
    """
    if not safeguard:
        for _ in range(max_steps):
            current = np.exp(display_log(current))
        return current
    if column_values is not None:
        return _column_steps(current, display_log, column_values, max_steps, tol, {} if memory is None else memory)
    with np.errstate(divide="ignore"):
        log_cur = np.log(current)
    val = value(current)
    alpha = 1.0
    for _ in range(max_steps):
        target = display_log(current)
        while True:
            cand_log = target if alpha == 1.0 else _interpolate_log(log_cur, target, alpha)
            cand = np.exp(cand_log)
            cand_val = value(cand)
            if cand_val <= val + J_SLACK * max(1.0, abs(val)):
                break
            alpha *= 0.5
            if alpha < 1e-12:
                return current
        change = float(np.max(np.abs(cand - current)))
        current, log_cur, val = cand, cand_log, cand_val
        if change < tol:
            break
        alpha = min(1.0, 2.0 * alpha)
    return current


def _initial_kernels(n_in: int, n_out: int, init: str, rng: np.random.Generator):
    if init == "uniform":
        return np.full((n_in, n_in), 1.0 / n_in), np.full((n_out, n_out), 1.0 / n_out)
    k1 = rng.dirichlet(np.ones(n_in), size=n_in).T
    k2 = rng.dirichlet(np.ones(n_out), size=n_out).T
    return k1, k2


def run_alternation(px, ks, k1, k2, beta1, beta2, *, max_iters, tol, inner_iters=1, inner_tol=0.0,
                    safeguard=True, pin_k1=False, pin_k2=False, callback=None):
    """Core loop on arrays.  Returns (k1, k2, objective_trace, delta_trace, converged).

    ``objective_trace[0]`` is L at the initial kernels; entry ``t`` is L after
    iteration ``t``.  Pinned blocks are held fixed (their beta should be 0).
    """
    n, m = k1.shape[0], k2.shape[0]
    # with K1 fixed at the identity and a deterministic model, J separates over K2 columns
    separable_k2 = pin_k1 and is_one_hot(ks) and np.array_equal(k1, np.eye(n))
    h1 = k1 @ px
    pyt = ks @ h1
    h2 = k2 @ pyt
    objective_trace = [objective_arrays(px, ks, k1, k2, beta1, beta2)[0]]
    delta_trace = []
    memory1, memory2 = {}, {}
    converged = False
    for t in range(max_iters):
        old1, old2 = k1, k2
        if not pin_k1:
            k1 = minimize_block(
                k1,
                lambda k: k1_display_log(px, ks, k, k2, h1, h2, beta1, beta2),
                lambda k: j_arrays(px, ks, k, k2, h1, h2, beta1, beta2),
                inner_iters, inner_tol, safeguard,
                column_values=lambda k: k1_column_costs(px, ks, k, k2, h1, h2, beta1, beta2), memory=memory1)
        if not pin_k2:
            pyt_new = ks @ (k1 @ px)
            k2 = minimize_block(
                k2,
                lambda k: k2_display_log(px, ks, k1, k, h2, pyt_new, beta2),
                lambda k: j_arrays(px, ks, k1, k, h1, h2, beta1, beta2),
                inner_iters, inner_tol, safeguard,
                column_values=(lambda k: diagonal_column_costs(k, h2, beta2)) if separable_k2 else None, memory=memory2)
        h1 = k1 @ px
        pyt = ks @ h1
        h2 = k2 @ pyt
        obj = objective_arrays(px, ks, k1, k2, beta1, beta2)[0]
        if not np.isfinite(obj):
            raise NumericalFailure(f"objective became {obj} at iteration {t + 1}", iteration=t + 1)
        delta = (np.abs(k1 - old1).sum() + np.abs(k2 - old2).sum()) / (n + m)
        objective_trace.append(obj)
        delta_trace.append(float(delta))
        if callback is not None:
            callback(t + 1, k1, k2)
        if delta < tol:
            converged = True
            break
    return k1, k2, objective_trace, delta_trace, converged


# ---------------------------------------------------------------------------
# public operations


def objective(px: Distribution, kstar: Kernel, k1: Kernel, k2: Kernel, beta1: float, beta2: float) -> float:
    check_chain(px, kstar, k1, k2)
    return objective_arrays(px.probs, kstar.matrix, k1.matrix, k2.matrix, beta1, beta2)[0]


def objective_components(px: Distribution, kstar: Kernel, k1: Kernel, k2: Kernel) -> dict:
    """Expected KL, I(X;X~) and I(Y~;Y) of a laundered model."""
    check_chain(px, kstar, k1, k2)
    _, ekl, mi_in, mi_out = objective_arrays(px.probs, kstar.matrix, k1.matrix, k2.matrix, 0.0, 0.0)
    return {"utility_kl": ekl, "mi_input": mi_in, "mi_output": mi_out}


def j_functional(px: Distribution, kstar: Kernel, k1: Kernel, k2: Kernel,
                 h1: Distribution, h2: Distribution, beta1: float, beta2: float) -> float:
    """Surrogate objective with free marginals ``h1`` (over X~) and ``h2`` (over Y).

    Equals :func:`objective` when ``h1``, ``h2`` are the induced marginals and
    is never smaller otherwise.
    """
    check_chain(px, kstar, k1, k2)
    if h1.alphabet != k1.output_alphabet or h2.alphabet != k2.output_alphabet:
        raise ShapeError("h1 must live on X~ and h2 on Y")
    return j_arrays(px.probs, kstar.matrix, k1.matrix, k2.matrix, h1.probs, h2.probs, beta1, beta2)


def update_k1(state: AlgorithmState, px: Distribution, kstar: Kernel, beta1: float, beta2: float) -> Kernel:
    """One evaluation of the K1 optimality equation at ``state``.

    Uses ``state.marg_xtilde`` and ``state.marg_y`` as the marginals.
    """
    check_chain(px, kstar, state.k1, state.k2)
    if not beta1 > 0:
        raise DomainError("the K1 update needs beta1 > 0")
    logk = k1_display_log(px.probs, kstar.matrix, state.k1.matrix, state.k2.matrix,
                          state.marg_xtilde.probs, state.marg_y.probs, beta1, beta2)
    return Kernel(state.k1.input_alphabet, state.k1.output_alphabet, np.exp(logk))


def update_k2(state: AlgorithmState, px: Distribution, kstar: Kernel, beta2: float) -> Kernel:
    """One evaluation of the K2 optimality equation at ``state``.

    ``state.k1`` should already be the new input kernel and ``state.k2`` the
    previous output kernel (the mixed cascade); ``state.marg_ytilde`` and
    ``state.marg_y`` supply the marginals.
    """
    check_chain(px, kstar, state.k1, state.k2)
    if not beta2 > 0:
        raise DomainError("the K2 update needs beta2 > 0")
    logk = k2_display_log(px.probs, kstar.matrix, state.k1.matrix, state.k2.matrix,
                          state.marg_y.probs, state.marg_ytilde.probs, beta2)
    return Kernel(state.k2.input_alphabet, state.k2.output_alphabet, np.exp(logk))


def fixed_point_residual(px: Distribution, kstar: Kernel, k1: Kernel, k2: Kernel,
                         beta1: float, beta2: float) -> float:
    """Largest entrywise gap between (k1, k2) and their optimality right-hand sides.

    Marginals are the ones induced by (k1, k2).  A block whose beta is zero is
    pinned and contributes no gap; output symbols the model never emits have
    no equation and are skipped.
    """
    check_chain(px, kstar, k1, k2)
    return residual_arrays(px.probs, kstar.matrix, k1.matrix, k2.matrix, beta1, beta2)


def residual_arrays(px, ks, k1, k2, beta1, beta2) -> float:
    h1 = k1 @ px
    pyt = ks @ h1
    h2 = k2 @ pyt
    gap = 0.0
    if beta1 > 0:
        rhs = np.exp(k1_display_log(px, ks, k1, k2, h1, h2, beta1, beta2))
        gap = max(gap, float(np.max(np.abs(rhs - k1))))
    if beta2 > 0:
        rhs = np.exp(k2_display_log(px, ks, k1, k2, h2, pyt, beta2, strict=False))
        gap = max(gap, float(np.max(np.abs(rhs - k2))))
    return gap


def _solution(px, kstar, k1m, k2m, trace, deltas, converged, config, beta1, beta2, restart_objectives=()):
    k1 = Kernel(px.alphabet, kstar.input_alphabet, k1m / k1m.sum(axis=0, keepdims=True))
    k2 = Kernel(kstar.output_alphabet, kstar.output_alphabet, k2m / k2m.sum(axis=0, keepdims=True))
    comps = objective_components(px, kstar, k1, k2)
    return OilSolution(
        k1=k1, k2=k2, effective=cascade(cascade(k1, kstar), k2),
        objective_trace=[float(v) for v in trace], delta_trace=[float(v) for v in deltas],
        converged=bool(converged), residual=fixed_point_residual(px, kstar, k1, k2, beta1, beta2),
        config=config, restart_objectives=list(restart_objectives), **comps)


def oil_optimize(px: Distribution, kstar, config: OilConfig,
                 k1_init: Optional[Kernel] = None, k2_init: Optional[Kernel] = None,
                 fixed_k1: Optional[Kernel] = None, fixed_k2: Optional[Kernel] = None) -> OilSolution:
    """Jointly optimize the input and output laundering kernels.

    Args:
        px: query distribution over X.
        kstar: the model, a Kernel or a DeterministicModel (X -> Y).
        config: tradeoff weights and iteration controls.
        k1_init, k2_init: optional starting kernels (override ``config.init``
            for the first run; restarts always draw random kernels).
        fixed_k1, fixed_k2: hold that block at the given kernel throughout.

    A zero beta pins its block to the identity, so ``beta1 == 0`` gives the
    output-only problem and ``beta2 == 0`` the input-only one.
    """
    kstar = as_kernel(kstar)
    check_model(px, kstar)
    n, m = kstar.input_alphabet.size, kstar.output_alphabet.size
    if config.beta1 == 0 and fixed_k1 is None:
        fixed_k1 = Kernel.identity(kstar.input_alphabet)
    if config.beta2 == 0 and fixed_k2 is None:
        fixed_k2 = Kernel.identity(kstar.output_alphabet)

    seeds = np.random.SeedSequence(config.seed).spawn(config.restarts + 1)
    best = None
    objectives = []
    for run, seq in enumerate(seeds):
        rng = np.random.default_rng(seq)
        k1, k2 = _initial_kernels(n, m, config.init if run == 0 else "random", rng)
        if run == 0 and k1_init is not None:
            k1 = k1_init.matrix.copy()
        if run == 0 and k2_init is not None:
            k2 = k2_init.matrix.copy()
        if fixed_k1 is not None:
            k1 = fixed_k1.matrix.copy()
        if fixed_k2 is not None:
            k2 = fixed_k2.matrix.copy()
        result = run_alternation(
            px.probs, kstar.matrix, k1, k2, config.beta1, config.beta2,
            max_iters=config.max_iters, tol=config.tol,
            inner_iters=config.inner_iters, inner_tol=config.inner_tol, safeguard=config.safeguard,
            pin_k1=fixed_k1 is not None, pin_k2=fixed_k2 is not None)
        objectives.append(result[2][-1])
        log.debug("run %d: objective %.12g after %d iterations", run, result[2][-1], len(result[3]))
        if best is None or result[2][-1] < best[2][-1]:
            best = result
        if fixed_k1 is not None and fixed_k2 is not None:
            break
    k1m, k2m, trace, deltas, converged = best
    return _solution(px, kstar, k1m, k2m, trace, deltas, converged, config,
                     config.beta1, config.beta2, objectives)


def with_betas(config: OilConfig, beta1: float, beta2: float) -> OilConfig:
    return replace(config, beta1=beta1, beta2=beta2)

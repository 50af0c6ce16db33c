import numpy as np
import pytest

from infolaunder import (
    Alphabet,
    AlgorithmState,
    DeterministicModel,
    Distribution,
    DomainError,
    Kernel,
    OilYInput,
    beta_infinity_kernel,
    beta_zero_kernel,
    joint_deterministic_updates,
    oil_optimize,
    oil_x,
    oil_y,
    oil_y_general,
    one_hot_kernel,
    pushforward,
    update_k1,
    update_k2,
)
from infolaunder.engine import OilConfig
from infolaunder.oracle import GridSpec, grid_search_oil_x, grid_search_oil_y, grid_search_oil_y_general
from infolaunder.special import oil_x_objective, oil_y_objective, r_from_model

from .conftest import random_dist, random_kernel


def column_tv(a, b):
    return 0.5 * np.abs(a - b).sum(axis=0)


def random_map(rng, n, m):
    """Surjective map of n inputs onto m outputs."""
    mapping = np.concatenate([np.arange(m), rng.integers(0, m, n - m)])
    rng.shuffle(mapping)
    return DeterministicModel(Alphabet.of_size(n), Alphabet.of_size(m), tuple(mapping))


# ---------------------------------------------------------------------------
# closed forms


def test_limit_kernels():
    np.testing.assert_array_equal(beta_zero_kernel(Alphabet.of_size(3)).matrix, np.eye(3))
    k = beta_infinity_kernel(Distribution(Alphabet.of_size(2), [0.2, 0.8]))
    np.testing.assert_array_equal(k.matrix, [[0.2, 0.2], [0.8, 0.8]])


# ---------------------------------------------------------------------------
# OIL-Y


def test_oil_y_single_symbol():
    for beta in (0.1, 1.0, 50.0):
        np.testing.assert_array_equal(oil_y([1.0], beta).kernel.matrix, [[1.0]])


def test_oil_y_zero_beta_is_identity_and_negative_rejected():
    np.testing.assert_array_equal(oil_y([0.3, 0.7], 0.0).kernel.matrix, np.eye(2))
    with pytest.raises(DomainError):
        oil_y([0.3, 0.7], -1.0)


def test_oil_y_accepts_input_record():
    r = Distribution(Alphabet.of_size(3), [0.2, 0.3, 0.5])
    a = oil_y(OilYInput(r, 2.0, max_iters=500, tol=1e-12))
    b = oil_y(r, 2.0, max_iters=500, tol=1e-12)
    np.testing.assert_array_equal(a.kernel.matrix, b.kernel.matrix)


def test_oil_y_matches_grid_minimizer():
    res = oil_y([0.5, 0.5], 1.0, max_iters=5000, tol=1e-13)
    oracle = grid_search_oil_y([0.5, 0.5], 1.0, GridSpec(1e-3))
    np.testing.assert_allclose(res.kernel.matrix, oracle.kernel.matrix, atol=1e-3)
    assert abs(res.objective - oracle.objective) < 1e-4


def test_oil_y_trace_and_metric():
    r = np.random.default_rng(1).dirichlet(np.ones(6))
    res = oil_y(r, 3.0, max_iters=5000, tol=1e-11)
    assert res.converged and res.delta_trace[-1] < 1e-11
    assert np.max(np.diff(res.objective_trace)) <= 1e-12
    assert res.objective == pytest.approx(oil_y_objective(res.kernel.matrix, r / r.sum(), 3.0), abs=1e-13)


def test_oil_y_restarts_agree():
    r = np.random.default_rng(2).dirichlet(np.ones(5))
    objs = [oil_y(r, 1.5, max_iters=20000, tol=1e-12, seed=s).objective for s in range(10)]
    assert max(objs) - min(objs) < 1e-6


def test_oil_y_diagonal_shrinks_with_beta():
    r = np.random.default_rng(3).dirichlet(np.ones(4))
    diags = [np.diag(oil_y(r, b, max_iters=20000, tol=1e-12).kernel.matrix).mean() for b in (0.5, 1, 2, 5, 20)]
    assert all(x >= y - 1e-9 for x, y in zip(diags, diags[1:]))


def test_oil_y_large_beta_is_independent():
    r = np.random.default_rng(4).dirichlet(np.ones(5))
    res = oil_y(r, 1e4, max_iters=20000, tol=1e-12)
    limit = beta_infinity_kernel(res.marginal).matrix
    assert column_tv(res.kernel.matrix, limit).max() < 0.02


def test_oil_y_zero_mass_symbols_are_fixed():
    res = oil_y([0.4, 0.0, 0.6], 1.0, max_iters=2000, tol=1e-12)
    P = res.kernel.matrix
    np.testing.assert_array_equal(P[:, 1], [0, 1, 0])
    np.testing.assert_array_equal(P[1, [0, 2]], [0, 0])
    sub = oil_y([0.4, 0.6], 1.0, max_iters=2000, tol=1e-12).kernel.matrix
    np.testing.assert_allclose(P[np.ix_([0, 2], [0, 2])], sub, atol=1e-15)


# ---------------------------------------------------------------------------
# OIL-Y for a stochastic model


def test_oil_y_general_matches_oil_y_on_one_hot(rng):
    f = random_map(rng, 6, 4)
    px = random_dist(rng, 6)
    a = oil_y(r_from_model(px, f), 2.0, max_iters=300, tol=1e-13, keep_history=True)
    b = oil_y_general(px, one_hot_kernel(f), 2.0, max_iters=300, tol=1e-13)
    assert len(a.delta_trace) == len(b.delta_trace)
    np.testing.assert_allclose(a.objective_trace, b.objective_trace, atol=1e-9)
    np.testing.assert_allclose(a.kernel.matrix, b.kernel.matrix, atol=1e-9)


def test_oil_y_general_uninformative_model(rng):
    px = random_dist(rng, 3)
    ks = Kernel.constant(px.alphabet, random_dist(rng, 3))
    K = oil_y_general(px, ks, 1.0, max_iters=2000, tol=1e-12).kernel.matrix
    np.testing.assert_allclose(K, np.repeat(K[:, :1], 3, axis=1), atol=1e-9)


def test_oil_y_general_matches_pinned_engine(rng):
    px = random_dist(rng, 3)
    ks = random_kernel(rng, 3, 3, floor=0.05)
    a = oil_y_general(px, ks, 1.0, max_iters=20000, tol=1e-13)
    b = oil_optimize(px, ks, OilConfig(0.0, 1.0, max_iters=20000, tol=1e-13, init="uniform"))
    assert a.converged and b.converged
    np.testing.assert_allclose(a.kernel.matrix, b.k2.matrix, atol=1e-6)


def test_oil_y_general_binary_grid_oracle():
    px = Distribution(Alphabet.of_size(2), [0.45, 0.55])
    ks = Kernel.from_matrix([[0.85, 0.3], [0.15, 0.7]])
    res = oil_y_general(px, ks, 0.5, max_iters=20000, tol=1e-13)
    oracle = grid_search_oil_y_general(px, ks, 0.5, GridSpec(0.02))
    assert res.objective <= oracle.objective + 1e-12
    fine = grid_search_oil_y_general(px, ks, 0.5, GridSpec(1e-3))
    assert abs(res.objective - fine.objective) < 1e-4


def test_oil_y_general_three_symbol_grid_oracle(rng):
    px = random_dist(rng, 3)
    ks = random_kernel(rng, 3, 3, floor=0.1)
    res = oil_y_general(px, ks, 1.0, max_iters=20000, tol=1e-13)
    oracle = grid_search_oil_y_general(px, ks, 1.0, GridSpec(0.1))
    # every grid kernel is feasible, so the solver must not lose to the grid
    assert res.objective <= oracle.objective + 1e-12


# ---------------------------------------------------------------------------
# OIL-X


def test_oil_x_injective_small_beta_is_near_identity(rng):
    a4 = Alphabet.of_size(4)
    f = DeterministicModel(a4, a4, (3, 1, 0, 2))
    res = oil_x(random_dist(rng, 4), f, 0.01, max_iters=5000, tol=1e-13)
    assert np.diag(res.kernel.matrix).min() > 0.99


def test_oil_x_constant_model_gives_marginal_columns(rng):
    a4 = Alphabet.of_size(4)
    f = DeterministicModel(a4, Alphabet.of_size(1), (0, 0, 0, 0))
    px = random_dist(rng, 4)
    res = oil_x(px, f, 1.0, max_iters=5000, tol=1e-13)
    limit = beta_infinity_kernel(pushforward(px, res.kernel)).matrix
    np.testing.assert_allclose(res.kernel.matrix, limit, atol=1e-12)


def test_oil_x_fiber_form_matches_general_form(rng):
    f = random_map(rng, 5, 3)
    px = random_dist(rng, 5)
    a = oil_x(px, f, 0.7, max_iters=200, tol=1e-14)
    b = oil_x(px, one_hot_kernel(f), 0.7, max_iters=200, tol=1e-14)
    np.testing.assert_allclose(a.kernel.matrix, b.kernel.matrix, atol=1e-10)


def test_oil_x_matches_grid_oracle():
    a3 = Alphabet.of_size(3)
    f = DeterministicModel(a3, Alphabet.of_size(2), (0, 0, 1))
    px = Distribution(a3, [0.2, 0.5, 0.3])
    res = oil_x(px, f, 1.0, max_iters=20000, tol=1e-13)
    oracle = grid_search_oil_x(px, f, 1.0, GridSpec(0.01, budget=1e8), method="split")
    assert abs(res.objective - oracle.objective) < 1e-3
    assert res.objective == pytest.approx(oil_x_objective(px, f, res.kernel, 1.0), abs=1e-12)
    # minimizers are only unique up to moving mass inside a fiber
    ks = one_hot_kernel(f).matrix
    np.testing.assert_allclose(ks @ res.kernel.matrix, ks @ oracle.kernel.matrix, atol=0.02)


# ---------------------------------------------------------------------------
# joint updates for a deterministic model


@pytest.mark.parametrize("seed", range(10))
def test_joint_deterministic_updates_match_general(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    m = int(rng.integers(1, n + 1))
    f = random_map(rng, n, m)
    px = random_dist(rng, n)
    ks = one_hot_kernel(f)
    k1 = random_kernel(rng, n, n, floor=0.01)
    k2 = random_kernel(rng, m, m, floor=0.01)
    state = AlgorithmState.induced(px, ks, k1, k2)
    b1, b2 = rng.choice([0.5, 1.0, 5.0], 2)
    fast1, fast2 = joint_deterministic_updates(state, px, f, b1, b2)
    np.testing.assert_allclose(fast1.matrix, update_k1(state, px, ks, b1, b2).matrix, atol=1e-12, rtol=0)
    np.testing.assert_allclose(fast2.matrix, update_k2(state, px, ks, b2).matrix, atol=1e-12, rtol=0)


def test_joint_updates_identity_start_reduce_to_diagonal_form(rng):
    a3 = Alphabet.of_size(3)
    f = DeterministicModel(a3, a3, (0, 1, 2))
    px = random_dist(rng, 3)
    ident = Kernel.identity(a3)
    state = AlgorithmState.induced(px, one_hot_kernel(f), ident, ident)
    _, k2 = joint_deterministic_updates(state, px, f, 1.0, 0.8)
    want = px.probs[:, None] * np.exp(np.eye(3) / 0.8)
    np.testing.assert_allclose(k2.matrix, want / want.sum(axis=0), atol=1e-14)


def test_joint_updates_constant_model(rng):
    a4 = Alphabet.of_size(4)
    f = DeterministicModel(a4, Alphabet.of_size(1), (0, 0, 0, 0))
    px = random_dist(rng, 4)
    state = AlgorithmState.induced(px, one_hot_kernel(f), random_kernel(rng, 4, 4, 0.01),
                                   Kernel.identity(Alphabet.of_size(1)))
    k1, k2 = joint_deterministic_updates(state, px, f, 1.0, 1.0)
    np.testing.assert_allclose(k1.matrix, np.repeat(k1.matrix[:, :1], 4, axis=1), atol=1e-14)
    np.testing.assert_array_equal(k2.matrix, [[1.0]])

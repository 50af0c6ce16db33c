import numpy as np
import pytest

from infolaunder import (
    Alphabet,
    DegenerateInputError,
    DeterministicModel,
    Distribution,
    DomainError,
    Kernel,
    LaunderError,
    cascade,
    entropy,
    expected_kl,
    one_hot_kernel,
    oil_y,
    pushforward,
)
from infolaunder.bench import (
    DirichletSpec,
    QuantizerConfig,
    TradeoffCurve,
    TradeoffPoint,
    dirichlet_benchmark,
    dirichlet_kernel,
    estimate_r,
    exact_agreement,
    monte_carlo_agreement,
    quantize,
    surrogate_extraction,
    sweep,
    synthetic_classifier,
)
from infolaunder.oracle import GridSpec, grid_search_oil_y
from infolaunder.special import r_from_model

NEWS_R = [0.22, 0.27, 0.21, 0.30]


def mean_diag(k):
    return float(np.mean(np.diag(k.matrix)))


# ---------------------------------------------------------------------------
# Dirichlet baseline


def test_dirichlet_determinism_and_columns():
    a = dirichlet_kernel(DirichletSpec(5, 2, 4, seed=9))
    b = dirichlet_kernel(DirichletSpec(5, 2, 4, seed=9))
    np.testing.assert_array_equal(a.matrix, b.matrix)
    assert np.all(np.abs(a.matrix.sum(axis=0) - 1) < 1e-9)
    with pytest.raises(DomainError):
        DirichletSpec(0, 1, 3)


def test_dirichlet_symmetric_has_no_diagonal_preference():
    diags = [mean_diag(dirichlet_kernel(DirichletSpec(3, 3, 4, seed=s))) for s in range(400)]
    se = np.std(diags, ddof=1) / np.sqrt(len(diags))
    assert abs(np.mean(diags) - 0.25) < 3 * se


def test_dirichlet_strong_diagonal():
    diags = [mean_diag(dirichlet_kernel(DirichletSpec(100, 1, 4, seed=s))) for s in range(50)]
    assert np.mean(diags) > 0.9


def test_dirichlet_diagonal_monotone_in_ratio():
    means = []
    for a, b in [(1, 1), (3, 1), (10, 1), (50, 1)]:
        means.append(np.mean([mean_diag(dirichlet_kernel(DirichletSpec(a, b, 4, seed=s))) for s in range(30)]))
    assert all(x < y for x, y in zip(means, means[1:]))


def test_dirichlet_benchmark_rows():
    px, f = synthetic_classifier(NEWS_R)
    rows = dirichlet_benchmark(px, f, [(100, 1), (10, 10)], replications=5, seed=3, n_samples=2000)
    again = dirichlet_benchmark(px, f, [(100, 1), (10, 10)], replications=5, seed=3, n_samples=2000)
    assert [r.point for r in rows] == [r.point for r in again]
    assert rows[0].point.empirical_agreement > 0.95
    assert rows[0].point.utility_kl < rows[1].point.utility_kl
    one = dirichlet_benchmark(px, f, [(100, 1)], replications=1, seed=3, n_samples=500)
    assert one[0].point == dirichlet_benchmark(px, f, [(100, 1)], replications=1, seed=3, n_samples=500)[0].point


# ---------------------------------------------------------------------------
# agreement and extraction


def test_agreement_identity_is_one():
    px, f = synthetic_classifier(NEWS_R)
    i1, i2 = Kernel.identity(px.alphabet), Kernel.identity(f.output_alphabet)
    assert monte_carlo_agreement(f, i1, i2, px, 1000, 0) == 1.0
    ks = Kernel.from_matrix(np.random.default_rng(0).dirichlet(np.ones(4), size=8).T, px.alphabet,
                            f.output_alphabet)
    assert monte_carlo_agreement(ks, i1, i2, px, 1000, 0) == 1.0


def test_agreement_uniform_output_kernel():
    px, f = synthetic_classifier(NEWS_R)
    ys = f.output_alphabet
    uniform = Kernel.constant(ys, Distribution.uniform(ys))
    n = 100_000
    got = monte_carlo_agreement(f, Kernel.identity(px.alphabet), uniform, px, n, 1)
    p = 1 / 4
    assert abs(got - p) < 3 * np.sqrt(p * (1 - p) / n)


def test_agreement_point_mass_is_exact():
    a3 = Alphabet.of_size(3)
    f = DeterministicModel(a3, a3, (1, 2, 0))
    swap = one_hot_kernel(DeterministicModel(a3, a3, (0, 2, 1)))
    point = Distribution.point_mass(a3, 0)
    ident = Kernel.identity(a3)
    assert monte_carlo_agreement(f, ident, ident, point, 500, 0) == 1.0
    assert monte_carlo_agreement(f, ident, swap, point, 500, 0) == 0.0


def test_agreement_matches_exact_probability():
    px, f = synthetic_classifier(NEWS_R)
    k2 = oil_y(r_from_model(px, f), 2.0, max_iters=5000, tol=1e-12).kernel
    k2 = Kernel(f.output_alphabet, f.output_alphabet, k2.matrix)
    k1 = Kernel.identity(px.alphabet)
    n = 50_000
    p = exact_agreement(f, k1, k2, px)
    got = monte_carlo_agreement(f, k1, k2, px, n, 5)
    assert abs(got - p) < 3 * np.sqrt(p * (1 - p) / n)


def test_extraction_without_laundering_succeeds():
    a3 = Alphabet.of_size(3)
    px = Distribution(a3, [0.3, 0.3, 0.4])
    ks = Kernel.from_matrix([[0.7, 0.2, 0.1], [0.2, 0.6, 0.3], [0.1, 0.2, 0.6]])
    ident = Kernel.identity(a3)
    _, fidelity = surrogate_extraction(ks, ident, ident, px, 1_000_000, 0)
    assert fidelity < 0.01


def test_extraction_blocked_by_heavy_laundering():
    px, f = synthetic_classifier(NEWS_R)
    ks = one_hot_kernel(f)
    k2 = oil_y(r_from_model(px, f), 1e4, max_iters=20000, tol=1e-12).kernel
    k2 = Kernel(f.output_alphabet, f.output_alphabet, k2.matrix)
    k1 = Kernel.identity(px.alphabet)
    gap = expected_kl(px, ks, cascade(cascade(k1, ks), k2))
    fids = [surrogate_extraction(f, k1, k2, px, n, 2)[1] for n in (10_000, 1_000_000)]
    assert gap > 1.0
    assert fids[1] == pytest.approx(gap, rel=0.01)
    assert min(fids) > 0.5 * gap


def test_extraction_query_count():
    px, f = synthetic_classifier(NEWS_R)
    k1, k2 = Kernel.identity(px.alphabet), Kernel.identity(f.output_alphabet)
    with pytest.raises(DomainError):
        surrogate_extraction(f, k1, k2, px, 0, 0)
    est, _ = surrogate_extraction(f, k1, k2, px, 1, 0)
    # one observed column is [2, 1, 1, 1] / 5, every other column stays uniform
    touched = np.flatnonzero(np.any(est.matrix != 0.25, axis=0))
    assert len(touched) == 1
    np.testing.assert_allclose(np.sort(est.matrix[:, touched[0]]), [0.2, 0.2, 0.2, 0.4])


# ---------------------------------------------------------------------------
# sweeps


def test_sweep_beta_zero_is_no_laundering():
    px, f = synthetic_classifier(NEWS_R)
    curve = sweep(px, f, [0.0], n_samples=1000)
    (point,) = curve.points
    assert point.utility_kl == 0.0 and point.empirical_agreement == 1.0
    assert point.mi_output == pytest.approx(entropy(r_from_model(px, f)), abs=1e-12)
    assert point.mi_input == pytest.approx(entropy(px), abs=1e-12)


def test_sweep_trend_on_news_frequencies():
    px, f = synthetic_classifier(NEWS_R)
    curve = sweep(px, f, [0, 1, 2, 5, 20, 50], n_samples=5000)
    u, leak = curve.column("utility_kl"), curve.column("mi_output")
    assert np.all(np.diff(u) >= -1e-6)
    assert np.all(np.diff(leak) <= 1e-6)


def test_sweep_points_match_oracle():
    a2 = Alphabet.of_size(2)
    f = DeterministicModel(a2, a2, (0, 1))
    px = Distribution(a2, [0.35, 0.65])
    curve = sweep(px, f, [0.5, 1, 3], n_samples=100)
    for point in curve:
        oracle = grid_search_oil_y(px.probs, point.beta, GridSpec(1e-3))
        assert abs(point.objective - oracle.objective) < 1e-4


def test_sweep_modes_and_errors():
    px, f = synthetic_classifier(NEWS_R[:2], inputs_per_class=1)
    for mode in ("joint", "input_only", "output_only"):
        curve = sweep(px, f, [0, 1], mode=mode, n_samples=200)
        assert len(curve) == 2
    with pytest.raises(DomainError):
        sweep(px, f, [1, 0])
    with pytest.raises(DomainError):
        sweep(px, f, [1], mode="both")
    with pytest.raises(LaunderError) as info:
        sweep(px, f, [0, 2], mode="input_only", n_samples=0)
    assert info.value.beta == 0.0


def test_curve_invariants():
    p = TradeoffPoint(1.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    with pytest.raises(DomainError):
        TradeoffCurve((p, p))
    with pytest.raises(DomainError):
        TradeoffPoint(1.0, float("nan"), 0, 0, 0, 0.5)
    with pytest.raises(DomainError):
        TradeoffPoint(1.0, 0, 0, 0, 0, 1.5)


# ---------------------------------------------------------------------------
# quantizer and frequencies


def test_quantizer_examples():
    cfg = QuantizerConfig(0.0, 1.0, 30)
    assert quantize(-3.0, cfg) == 0
    assert quantize(10.0, cfg) == 29
    assert quantize(0.0, cfg) == 14
    assert cfg.grid[14] == pytest.approx(-3 / 29, abs=1e-12)
    assert cfg.grid[15] == pytest.approx(3 / 29, abs=1e-12)
    shifted = QuantizerConfig(5.0, 2.0)
    assert quantize([5.0 - 6.0, 5.0 + 20.0, 5.0], shifted) == [0, 29, 14]


def test_quantizer_properties():
    cfg = QuantizerConfig(1.5, 0.7, 30)
    assert quantize(list(cfg.grid), cfg) == list(range(30))
    xs = np.linspace(-5, 8, 2001)
    assert np.all(np.diff(quantize(list(xs), cfg)) >= 0)
    with pytest.raises(DomainError):
        quantize([0.0, float("inf")], cfg)
    with pytest.raises(DomainError):
        QuantizerConfig(0.0, 0.0)


def test_estimate_r():
    a2 = Alphabet.of_size(2)
    np.testing.assert_array_equal(estimate_r([1, 1, 1], a2).probs, [0, 1])
    np.testing.assert_array_equal(estimate_r([0, 1, 0, 1], a2).probs, [0.5, 0.5])
    with pytest.raises(DegenerateInputError):
        estimate_r([], a2)
    ys = Alphabet(("c0", "c1", "c2", "c3"))
    stream = [label for label, count in zip(ys.labels, (22, 27, 21, 30)) for _ in range(count)]
    np.random.default_rng(0).shuffle(stream)
    np.testing.assert_allclose(estimate_r(stream, ys).probs, NEWS_R, atol=1e-15)


def test_synthetic_classifier_frequencies():
    px, f = synthetic_classifier(NEWS_R, inputs_per_class=3)
    np.testing.assert_allclose(pushforward(px, one_hot_kernel(f)).probs, NEWS_R, atol=1e-15)

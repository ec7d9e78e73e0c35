import math
import random

import pytest

from automt.stats import (
    KappaWeights,
    TTestResult,
    regularized_incomplete_beta,
    weighted_fleiss_kappa,
    welch_t_test,
)


def brute_force_weighted_kappa(table, weights, n_categories=None):
    """Definition evaluated term by term with plain loops."""
    n_items = len(table)
    n_raters = len(table[0])
    c = n_categories or max(max(row) for row in table)

    def disagreement(i, j):
        if c == 1:
            return 0.0
        base = abs(i - j) / (c - 1)
        return base * base if weights is KappaWeights.QUADRATIC else base

    observed_total = 0.0
    for row in table:
        pair_sum, pairs = 0.0, 0
        for r1 in range(n_raters):
            for r2 in range(n_raters):
                if r1 != r2:
                    pair_sum += disagreement(row[r1], row[r2])
                    pairs += 1
        observed_total += pair_sum / pairs
    observed = observed_total / n_items

    marginals = [0.0] * (c + 1)
    for row in table:
        for rating in row:
            marginals[rating] += 1
    total = n_items * n_raters
    expected = 0.0
    for i in range(1, c + 1):
        for j in range(1, c + 1):
            expected += (marginals[i] / total) * (marginals[j] / total) * disagreement(i, j)
    if expected == 0.0:
        return 1.0
    return 1.0 - observed / expected


def random_table(rng, min_items=1, max_items=12, min_raters=2, max_raters=6, c=5):
    n_items = rng.randint(min_items, max_items)
    n_raters = rng.randint(min_raters, max_raters)
    return [[rng.randint(1, c) for _ in range(n_raters)] for _ in range(n_items)]


def test_unanimous_table_is_exactly_one():
    table = [[3, 3, 3], [3, 3, 3]]
    for weights in KappaWeights:
        assert weighted_fleiss_kappa(table, weights, n_categories=5) == 1.0
    # all raters agree per item, different categories across items
    mixed = [[1, 1, 1], [4, 4, 4], [2, 2, 2]]
    for weights in KappaWeights:
        assert weighted_fleiss_kappa(mixed, weights) == 1.0


def test_kappa_matches_brute_force_oracle():
    rng = random.Random(20250810)
    for _ in range(150):
        table = random_table(rng)
        for weights in KappaWeights:
            got = weighted_fleiss_kappa(table, weights, n_categories=5)
            want = brute_force_weighted_kappa(table, weights, n_categories=5)
            assert got == pytest.approx(want, abs=1e-10)


def test_kappa_invariant_under_item_and_rater_permutation():
    rng = random.Random(5)
    table = random_table(rng, min_items=6, max_items=6, min_raters=4, max_raters=4)
    base = weighted_fleiss_kappa(table, KappaWeights.LINEAR, n_categories=5)
    rows = table.copy()
    rng.shuffle(rows)
    assert weighted_fleiss_kappa(rows, KappaWeights.LINEAR, 5) == pytest.approx(base, abs=1e-12)
    permuted = [[row[i] for i in (2, 0, 3, 1)] for row in table]
    assert weighted_fleiss_kappa(permuted, KappaWeights.LINEAR, 5) == pytest.approx(
        base, abs=1e-12
    )


def test_kappa_decreases_when_unanimity_perturbed():
    unanimous = [[2, 2, 2]] * 4
    perturbed = [list(row) for row in unanimous]
    perturbed[0][0] = 3
    for weights in KappaWeights:
        assert weighted_fleiss_kappa(perturbed, weights, n_categories=5) < 1.0


def test_kappa_input_validation():
    with pytest.raises(ValueError):
        weighted_fleiss_kappa([[1], [1]])  # single rater
    with pytest.raises(ValueError):
        weighted_fleiss_kappa([[1, 2], [1, 2, 3]])  # ragged
    with pytest.raises(ValueError):
        weighted_fleiss_kappa([[0, 1]], n_categories=5)


def test_degenerate_unanimous_single_category_returns_one():
    assert weighted_fleiss_kappa([[1, 1], [1, 1]], n_categories=1) == 1.0


# Frozen from a 50-digit mpmath evaluation of the same formulas.
WELCH_FIXTURES = [
    (
        [0.40, 0.41, 0.42, 0.40, 0.41],
        [0.36, 0.35, 0.37, 0.36, 0.36],
        9.7979589711327124,
        7.7837837837837838,
        1.1958631301037555e-5,
    ),
]


@pytest.mark.parametrize("a,b,t_expected,df_expected,p_expected", WELCH_FIXTURES)
def test_welch_pinned_fixture(a, b, t_expected, df_expected, p_expected):
    result = welch_t_test(a, b)
    assert result.t == pytest.approx(t_expected, abs=1e-10)
    assert result.df == pytest.approx(df_expected, abs=1e-10)
    assert result.p_two_sided == pytest.approx(p_expected, abs=1e-10)
    assert not result.degenerate


def test_welch_identical_samples():
    result = welch_t_test([1, 2, 3], [1, 2, 3])
    assert result.t == 0.0
    assert result.p_two_sided == 1.0


def test_welch_clear_separation():
    a = [1, 2, 3, 4, 5]
    b = [x + 10 + 0.001 * i for i, x in enumerate(a)]
    assert welch_t_test(a, b).p_two_sided < 0.001


def test_welch_antisymmetry_exact():
    rng = random.Random(11)
    for _ in range(50):
        a = [rng.uniform(0, 1) for _ in range(rng.randint(2, 9))]
        b = [rng.uniform(0, 1) for _ in range(rng.randint(2, 9))]
        ab, ba = welch_t_test(a, b), welch_t_test(b, a)
        assert ab.t == -ba.t
        assert ab.p_two_sided == ba.p_two_sided
        assert ab.df == ba.df


def test_welch_p_in_unit_interval():
    rng = random.Random(23)
    for _ in range(200):
        a = [rng.gauss(0, 1) for _ in range(rng.randint(2, 8))]
        b = [rng.gauss(rng.uniform(-3, 3), rng.uniform(0.1, 2)) for _ in range(rng.randint(2, 8))]
        p = welch_t_test(a, b).p_two_sided
        assert 0.0 <= p <= 1.0


def test_welch_degenerate_samples_flagged():
    equal = welch_t_test([2, 2, 2], [2, 2])
    assert equal == TTestResult(0.0, equal.df, 1.0, degenerate=True)
    assert math.isnan(equal.df)
    unequal = welch_t_test([2, 2, 2], [3, 3])
    assert unequal.degenerate
    assert unequal.p_two_sided == 0.0
    assert unequal.t == -math.inf
    with pytest.raises(ValueError):
        welch_t_test([1], [1, 2])


def test_incomplete_beta_edges():
    assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
    assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0
    # I_x(1,1) is the identity
    for x in (0.1, 0.5, 0.9):
        assert regularized_incomplete_beta(1.0, 1.0, x) == pytest.approx(x, abs=1e-12)
    # symmetry: I_x(a,b) = 1 - I_{1-x}(b,a)
    assert regularized_incomplete_beta(3.5, 1.25, 0.3) == pytest.approx(
        1.0 - regularized_incomplete_beta(1.25, 3.5, 0.7), abs=1e-12
    )

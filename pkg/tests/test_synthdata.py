import numpy as np
import pytest

from oim.errors import ConfigError, DataError, EmptyDatasetError
from oim.synthdata import (
    BERNOULLI_LOGISTIC,
    NORMAL_IDENTITY,
    CorrelationMatrix,
    OutcomeSpec,
    PerturbationSpec,
    correlation_with_protected,
    flip_labels,
    four_group_scenario,
    generate_pair,
    hire_probability,
    lipton_scenario,
    random_correlation_matrix,
    sample_features,
)

SIGN_ATTENUATION = np.sqrt(2.0 / np.pi)  # E|N(0,1)|


class TestRandomCorrelationMatrix:
    def test_dim_one_is_forced_to_unit(self):
        m = random_correlation_matrix(1, np.random.default_rng(0))
        assert m.entries.shape == (1, 1)
        assert m.entries[0, 0] == 1.0

    def test_dim_three_is_valid_by_eigendecomposition(self):
        m = random_correlation_matrix(3, np.random.default_rng(7))
        assert np.array_equal(m.entries, m.entries.T)
        assert np.allclose(np.diag(m.entries), 1.0)
        assert np.linalg.eigvalsh(m.entries).min() >= -1e-10

    def test_entry_spread_covers_wide_range(self):
        # Monte Carlo histogram oracle: the (0, 1) entry should roam widely.
        vals = [
            random_correlation_matrix(3, np.random.default_rng(seed)).entries[0, 1]
            for seed in range(1000)
        ]
        assert min(vals) <= -0.6
        assert max(vals) >= 0.6

    def test_invalid_dimension_rejected(self):
        with pytest.raises(ConfigError):
            random_correlation_matrix(0, np.random.default_rng(0))

    @pytest.mark.parametrize("dim", [2, 3, 5])
    def test_psd_across_seeds(self, dim):
        for seed in range(1000):
            m = random_correlation_matrix(dim, np.random.default_rng(seed))
            assert np.linalg.eigvalsh(m.entries).min() >= -1e-10

    def test_asymmetric_entries_rejected(self):
        bad = np.array([[1.0, 0.5], [0.2, 1.0]])
        with pytest.raises(ConfigError):
            CorrelationMatrix(dim=2, entries=bad)

    def test_infeasible_target_correlation_rejected(self):
        with pytest.raises(ConfigError):
            correlation_with_protected(2, 1.5)


class TestSampleFeatures:
    def test_independence_under_identity(self):
        sigma = CorrelationMatrix(dim=3, entries=np.eye(3))
        X, z = sample_features(10_000, sigma, np.random.default_rng(3))
        assert abs(np.corrcoef(X[:, 0], z)[0, 1]) < 0.04

    def test_sign_is_balanced(self):
        sigma = random_correlation_matrix(3, np.random.default_rng(5))
        _, z = sample_features(10_000, sigma, np.random.default_rng(6))
        assert 0.47 <= np.mean(z == 1) <= 0.53

    def test_sign_binarization_attenuation(self):
        # Closed form: corr(X1, sign(G)) = rho * sqrt(2/pi) for unit normals.
        sigma = correlation_with_protected(2, 0.9)
        X, z = sample_features(10_000, sigma, np.random.default_rng(11))
        target = 0.9 * SIGN_ATTENUATION
        assert abs(np.corrcoef(X[:, 0], z)[0, 1] - target) <= 0.03

    def test_empty_sample_rejected(self):
        sigma = CorrelationMatrix(dim=2, entries=np.eye(2))
        with pytest.raises(EmptyDatasetError):
            sample_features(0, sigma, np.random.default_rng(0))

    def test_needs_a_protected_dimension(self):
        sigma = CorrelationMatrix(dim=1, entries=np.eye(1))
        with pytest.raises(DataError):
            sample_features(10, sigma, np.random.default_rng(0))


def _features(n, seed, dim=3):
    sigma = random_correlation_matrix(dim, np.random.default_rng(seed))
    return sample_features(n, sigma, np.random.default_rng(seed + 1))


class TestGeneratePair:
    def test_none_kind_matches_clean_law(self):
        X, z = _features(10_000, 21)
        spec = OutcomeSpec(family=BERNOULLI_LOGISTIC, coefficients=[1.0, 0.0])
        pair = generate_pair(X, z, spec, PerturbationSpec(kind="none"), np.random.default_rng(22))
        for level in (-1, 1):
            m = pair.clean.z == level
            p_pool = (pair.clean.y[m].mean() + pair.perturbed.y[m].mean()) / 2
            se = np.sqrt(2.0 * p_pool * (1 - p_pool) / m.sum())
            assert abs(pair.clean.y[m].mean() - pair.perturbed.y[m].mean()) <= 3 * se

    def test_none_kind_no_shift_in_x_quantile_bins(self):
        X, z = _features(10_000, 41)
        spec = OutcomeSpec(family=BERNOULLI_LOGISTIC, coefficients=[1.0, 0.5])
        pair = generate_pair(X, z, spec, PerturbationSpec(kind="none"), np.random.default_rng(42))
        for level in (-1, 1):
            m = pair.clean.z == level
            bins = np.quantile(X[m, 0], [0.25, 0.5, 0.75])
            which = np.digitize(X[m, 0], bins)
            for b in range(4):
                rows = which == b
                cnt = rows.sum()
                p_pool = (pair.clean.y[m][rows].mean() + pair.perturbed.y[m][rows].mean()) / 2
                se = np.sqrt(max(2.0 * p_pool * (1 - p_pool) / cnt, 1e-12))
                diff = abs(pair.clean.y[m][rows].mean() - pair.perturbed.y[m][rows].mean())
                assert diff <= 4 * se

    def test_direct_perturbation_widens_group_gap(self):
        X, z = _features(10_000, 23)
        spec = OutcomeSpec(family=BERNOULLI_LOGISTIC, coefficients=[1.0, 0.0])
        pert = PerturbationSpec(kind="direct", protected_coefficient=5.0)
        pair = generate_pair(X, z, spec, pert, np.random.default_rng(24))
        gap = lambda y: y[pair.clean.z == 1].mean() - y[pair.clean.z == -1].mean()
        assert gap(pair.perturbed.y) > gap(pair.clean.y)

    def test_direct_mean_function_dominates_pointwise(self):
        X = np.linspace(-3, 3, 101)[:, None]
        spec = OutcomeSpec(family=BERNOULLI_LOGISTIC, coefficients=[1.0])
        shifted = OutcomeSpec(
            family=BERNOULLI_LOGISTIC, coefficients=[1.0], protected_coefficient=5.0
        )
        hi = shifted.mean(X, np.ones(101))
        lo = shifted.mean(X, -np.ones(101))
        assert (hi > spec.mean(X)).all() and (spec.mean(X) > lo).all()

    def test_label_flip_exact_count_inside_group(self):
        rng = np.random.default_rng(31)
        z = np.repeat([1, -1], 2000)
        y = np.concatenate([np.ones(1000), np.zeros(1000), np.ones(1000), np.zeros(1000)])
        flipped = flip_labels(y, z, group=(1, 1), fraction=0.5, rng=rng)
        changed = flipped != y
        assert changed.sum() == 500
        assert ((z == 1) & (y == 1))[changed].all()

    def test_label_flip_tie_rounds_down(self):
        rng = np.random.default_rng(32)
        z = np.ones(5, dtype=int)
        y = np.ones(5)
        flipped = flip_labels(y, z, group=(1, 1), fraction=0.5, rng=rng)
        assert (flipped != y).sum() == 2  # round(2.5) resolves by floor

    def test_label_flip_via_generate_pair(self):
        X, z = _features(4000, 33)
        spec = OutcomeSpec(family=BERNOULLI_LOGISTIC, coefficients=[0.5, 0.0])
        pert = PerturbationSpec(kind="label-flip", flip_group=(1, 1), flip_fraction=0.25)
        pair = generate_pair(X, z, spec, pert, np.random.default_rng(34))
        changed = pair.clean.y != pair.perturbed.y
        group = (pair.clean.z == 1) & (pair.clean.y == 1)
        assert changed.sum() == int(np.floor(0.25 * group.sum() + 0.5))
        assert group[changed].all()

    def test_feature_perturbation_touches_only_named_column(self):
        X, z = _features(500, 35)
        spec = OutcomeSpec(family=NORMAL_IDENTITY, coefficients=[1.0, -2.0])
        fspec = OutcomeSpec(
            family=NORMAL_IDENTITY, coefficients=[0.8], protected_coefficient=3.0
        )
        pert = PerturbationSpec(
            kind="feature-perturbation", feature_index=0, feature_spec=fspec
        )
        pair = generate_pair(X, z, spec, pert, np.random.default_rng(36))
        assert pair.perturbed_feature == 0
        assert np.array_equal(pair.clean.X[:, 1], pair.perturbed.X[:, 1])
        # Shared noise makes the perturbed column differ by exactly beta * z.
        np.testing.assert_allclose(
            pair.perturbed.X[:, 0] - pair.clean.X[:, 0], 3.0 * z.astype(float)
        )
        assert pair.perturbed.meta["perturbed_feature"] == 0

    def test_coefficient_mismatch_raises_shape_error(self):
        X, z = _features(50, 37)
        spec = OutcomeSpec(family=NORMAL_IDENTITY, coefficients=[1.0])
        with pytest.raises(DataError):
            generate_pair(X, z, spec, PerturbationSpec(kind="none"), np.random.default_rng(0))

    def test_deterministic_given_seed(self):
        X, z = _features(200, 38)
        spec = OutcomeSpec(family=BERNOULLI_LOGISTIC, coefficients=[1.0, 1.0])
        pert = PerturbationSpec(kind="direct", protected_coefficient=2.0)
        a = generate_pair(X, z, spec, pert, np.random.default_rng(99))
        b = generate_pair(X, z, spec, pert, np.random.default_rng(99))
        assert np.array_equal(a.clean.y, b.clean.y)
        assert np.array_equal(a.perturbed.y, b.perturbed.y)


class TestNonlinearForms:
    def test_product_form_overrides_linear(self):
        spec = OutcomeSpec(
            family=BERNOULLI_LOGISTIC, nonlinear_form="product", nonlinear_params=(2.0,)
        )
        X = np.array([[1.0, 3.0], [2.0, -1.0]])
        np.testing.assert_allclose(spec.index(X), [6.0, -4.0])

    def test_exp_and_sin_forms(self):
        X = np.array([[0.5, 2.0]])
        e = OutcomeSpec(
            family=NORMAL_IDENTITY, nonlinear_form="exp-product", nonlinear_params=(1.5, 0.3)
        )
        s = OutcomeSpec(
            family=NORMAL_IDENTITY, nonlinear_form="sin-product", nonlinear_params=(1.5, 0.3)
        )
        np.testing.assert_allclose(e.index(X), [1.5 * np.exp(0.3)])
        np.testing.assert_allclose(s.index(X), [1.5 * np.sin(0.3)])


class TestLiptonScenario:
    def test_group_balance(self):
        data = lipton_scenario(100_000, np.random.default_rng(51))
        assert 0.495 <= data.z.mean() <= 0.505

    def test_hair_length_mean_matches_beta_moment(self):
        # 35 * Beta(2, 2) has mean 17.5.
        data = lipton_scenario(100_000, np.random.default_rng(52))
        assert abs(data.X[data.z == 0, 0].mean() - 17.5) <= 0.2

    def test_group_one_hair_shorter_and_experience_bimodal(self):
        data = lipton_scenario(100_000, np.random.default_rng(53))
        assert data.X[data.z == 1, 0].mean() < data.X[data.z == 0, 0].mean()
        work1 = data.X[data.z == 1, 1]
        assert abs(work1.mean() - (0.2 * 10 + 0.8 * 15)) < 0.1

    def test_hire_probability_logit_zero(self):
        assert hire_probability(10.2) == pytest.approx(0.5, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(EmptyDatasetError):
            lipton_scenario(0, np.random.default_rng(0))


class TestFourGroupScenario:
    def test_groups_are_balanced(self):
        data = four_group_scenario(4000, np.random.default_rng(61))
        for zl in (-1, 1):
            for yl in (0.0, 1.0):
                assert ((data.z == zl) & (data.y == yl)).sum() == 1000

    def test_label_signal_in_first_feature(self):
        data = four_group_scenario(4000, np.random.default_rng(62))
        assert data.X[data.y == 1, 0].mean() > data.X[data.y == 0, 0].mean() + 2.0

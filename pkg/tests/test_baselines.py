import numpy as np
import pytest

from oim.baselines import (
    ALGORITHM_NAMES,
    EqOddsPredictor,
    EqOddsRule,
    Trainer,
    fit_eq_odds,
    make_trainer,
    traditional,
)
from oim.dataset import BINARY, CONTINUOUS, Dataset
from oim.errors import ConfigError, DataError, DegenerateGroupError, UsageError
from oim.glm import fit_glm
from oim.metrics import binarize
from oim.synthdata import sigmoid


def _classification_data(n, seed, shift=0.0):
    rng = np.random.default_rng(seed)
    z = rng.choice([-1, 1], size=n)
    X = rng.standard_normal((n, 2))
    y = rng.binomial(1, sigmoid(1.5 * X[:, 0] + shift * z)).astype(float)
    return Dataset(X=X, z=z, y=y, outcome=BINARY)


def _post_rates(rule, base, data):
    """Analytic post-processed TPR and FPR per group."""
    pred = binarize(base.predict(data.X))
    q = rule.positive_probability(pred, data.z)
    out = {}
    for level in rule.levels:
        m = data.z == level
        pos = m & (data.y == 1)
        neg = m & (data.y == 0)
        out[level] = (q[pos].mean(), q[neg].mean())
    return out


class TestTraditional:
    def test_delegates_to_glm_bitwise(self, rng):
        X = rng.standard_normal((200, 2))
        z = rng.choice([-1, 1], size=200)
        y = X[:, 0] + 0.2 * rng.standard_normal(200)
        data = Dataset(X=X, z=z, y=y, outcome=CONTINUOUS)
        a = traditional(data, "glm-identity", include_protected=True)
        b = fit_glm(data, "identity", include_protected=True)
        assert np.array_equal(a.coefficients, b.coefficients)
        assert a.intercept == b.intercept

    def test_unknown_hypothesis_rejected(self, rng):
        data = _classification_data(50, 0)
        with pytest.raises(UsageError):
            traditional(data, "svm", include_protected=False)


class TestEqOdds:
    def test_equal_groups_give_identity_rule(self):
        # Symmetric construction: both groups identical, so the identity rule
        # already satisfies the constraints and is the unique zero-cost choice.
        X = np.tile(np.array([[2.0], [-2.0], [2.0], [-2.0]]), (50, 1))
        y = np.tile(np.array([1.0, 0.0, 1.0, 0.0]), 50)
        z = np.tile(np.array([0, 0, 1, 1]), 50)
        data = Dataset(X=X, z=z, y=y, outcome=BINARY)
        base = fit_glm(data, "logit", include_protected=False)
        rule = fit_eq_odds(base, data)
        assert rule.keep_given_positive == (1.0, 1.0)
        assert rule.keep_given_negative == (1.0, 1.0)

    def test_constraints_hold_analytically(self):
        data = _classification_data(3000, seed=1, shift=1.0)
        base = fit_glm(data, "logit", include_protected=False)
        rule = fit_eq_odds(base, data)
        rates = _post_rates(rule, base, data)
        (t0, f0), (t1, f1) = rates[rule.levels[0]], rates[rule.levels[1]]
        assert abs(t0 - t1) <= 1e-6
        assert abs(f0 - f1) <= 1e-6

    def test_vertex_solution_is_optimal_over_feasible_grid(self):
        # LP oracle: sweep the 2-D feasible manifold (a0, b0 free, a1/b1
        # solved from the equalities) and verify no point beats the vertex.
        data = _classification_data(3000, seed=2, shift=1.5)
        base = fit_glm(data, "logit", include_protected=False)
        rule = fit_eq_odds(base, data)
        predictor = EqOddsPredictor(base=base, rule=rule)
        q = predictor.predict(data.X, data.z)
        best = np.mean(data.y + q * (1 - 2 * data.y))

        pred = binarize(base.predict(data.X))
        rates = _post_rates(EqOddsRule((-1, 1), (1.0, 1.0), (1.0, 1.0)), base, data)
        (t0, f0), (t1, f1) = rates[-1], rates[1]
        M = np.array([[t1, 1 - t1], [f1, 1 - f1]])
        for a0 in np.linspace(0, 1, 41):
            for b0 in np.linspace(0, 1, 41):
                rhs = np.array([a0 * t0 + b0 * (1 - t0), a0 * f0 + b0 * (1 - f0)])
                try:
                    a1, b1 = np.linalg.solve(M, rhs)
                except np.linalg.LinAlgError:
                    continue
                if not (0 <= a1 <= 1 and 0 <= b1 <= 1):
                    continue
                cand = EqOddsRule(
                    levels=(-1, 1),
                    keep_given_positive=(a0, a1),
                    keep_given_negative=(1 - b0, 1 - b1),
                )
                qc = cand.positive_probability(pred, data.z)
                obj = np.mean(data.y + qc * (1 - 2 * data.y))
                assert obj >= best - 1e-9

    def test_missing_label_class_rejected(self):
        X = np.random.default_rng(3).standard_normal((40, 1))
        y = np.concatenate([np.ones(20), np.zeros(20)])
        z = np.concatenate([np.zeros(20, dtype=int), np.ones(20, dtype=int)])
        data = Dataset(X=X, z=z, y=y, outcome=BINARY)
        base = fit_glm(data, "logit", include_protected=False)
        with pytest.raises(DegenerateGroupError):
            fit_eq_odds(base, data)

    def test_sampled_decisions_match_probabilities(self):
        data = _classification_data(2000, seed=4, shift=1.0)
        base = fit_glm(data, "logit", include_protected=False)
        predictor = EqOddsPredictor(base=base, rule=fit_eq_odds(base, data))
        q = predictor.predict(data.X, data.z)
        draws = np.stack(
            [
                predictor.sample(data.X, data.z, np.random.default_rng(seed))
                for seed in range(200)
            ]
        )
        np.testing.assert_allclose(draws.mean(axis=0), q, atol=0.12)

    def test_seeded_sampling_reproducible(self):
        data = _classification_data(500, seed=5, shift=0.5)
        base = fit_glm(data, "logit", include_protected=False)
        predictor = EqOddsPredictor(base=base, rule=fit_eq_odds(base, data))
        a = predictor.sample(data.X, data.z, np.random.default_rng(11))
        b = predictor.sample(data.X, data.z, np.random.default_rng(11))
        assert np.array_equal(a, b)

    def test_z_required_at_decision_time(self):
        data = _classification_data(500, seed=6)
        base = fit_glm(data, "logit", include_protected=False)
        predictor = EqOddsPredictor(base=base, rule=fit_eq_odds(base, data))
        with pytest.raises(UsageError):
            predictor.predict(data.X, None)

    def test_rule_probabilities_validated(self):
        with pytest.raises(UsageError):
            EqOddsRule(levels=(0, 1), keep_given_positive=(1.2, 0.5), keep_given_negative=(1.0, 1.0))


class TestRegistry:
    def test_every_registered_name_resolves(self):
        for name in ALGORITHM_NAMES:
            trainer = make_trainer(name, "glm-logit")
            assert isinstance(trainer, Trainer)

    def test_unknown_name_fails_fast_listing_registry(self):
        with pytest.raises(ConfigError, match="traditional-with-z"):
            make_trainer("fair-svm", "glm-logit")

    def test_unknown_hypothesis_fails_fast(self):
        with pytest.raises(ConfigError):
            make_trainer("oim", "resnet")

    def test_trainers_fit_each_algorithm(self):
        data = _classification_data(600, seed=7, shift=1.0)
        for name in ("oim", "traditional-with-z", "traditional-without-z", "eq-odds"):
            model = make_trainer(name, "glm-logit")(data)
            z = data.z if getattr(model, "uses_protected", False) else None
            preds = model.predict(data.X, z)
            assert np.isfinite(preds).all()

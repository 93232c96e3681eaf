import itertools

import numpy as np
import pytest

from conftest import make_loan_pair
from oim.dataset import BINARY, CONTINUOUS, Dataset
from oim.errors import DataError, DegenerateProtectedError, UsageError
from oim.glm import GlmModel, fit_glm
from oim.mixture import (
    MixingDistribution,
    chained_oim,
    counterfactual_predictions,
    mixture_predict,
    oim_fit,
    optimize_mixing,
    project_to_simplex,
)
from oim.synthdata import (
    NORMAL_IDENTITY,
    OutcomeSpec,
    PerturbationSpec,
    generate_pair,
    random_correlation_matrix,
    sample_features,
    sigmoid,
)


def _loan_model(base=0.0):
    return GlmModel(
        link="identity",
        loss="quadratic",
        coefficients=[-1.0],
        intercept=base,
        protected_levels=(-1, 1),
        protected_effects=[-1.0, 1.0],
    )


def simplex_grid(k: int, step: float) -> np.ndarray:
    """All weight vectors on the k-simplex with the given resolution."""
    m = round(1.0 / step)
    if k == 2:
        i = np.arange(m + 1)
        return np.column_stack([i, m - i]) / m
    pts = [
        (i, j, m - i - j)
        for i, j in itertools.product(range(m + 1), repeat=2)
        if i + j <= m
    ]
    return np.asarray(pts, dtype=float) / m


def grid_search_objective(P, y, loss, step=0.005):
    W = simplex_grid(P.shape[1], step)
    preds = P @ W.T
    if loss == "quadratic":
        objs = np.mean((preds - y[:, None]) ** 2, axis=0)
    else:
        c = np.clip(preds, 1e-12, 1 - 1e-12)
        objs = -np.mean(
            y[:, None] * np.log(c) + (1 - y[:, None]) * np.log1p(-c), axis=0
        )
    return float(objs.min())


class TestSimplexProjection:
    def test_interior_point_unchanged(self):
        w = np.array([0.2, 0.3, 0.5])
        np.testing.assert_allclose(project_to_simplex(w), w)

    def test_known_projection(self):
        np.testing.assert_allclose(project_to_simplex(np.array([1.0, 0.0])), [1.0, 0.0])
        np.testing.assert_allclose(
            project_to_simplex(np.array([2.0, 2.0])), [0.5, 0.5]
        )

    def test_matches_quadratic_program(self, rng):
        # Oracle: dense grid search for the nearest simplex point.
        for _ in range(20):
            v = rng.normal(scale=2.0, size=3)
            proj = project_to_simplex(v)
            W = simplex_grid(3, 0.01)
            dists = ((W - v) ** 2).sum(axis=1)
            assert ((proj - v) ** 2).sum() <= dists.min() + 1e-9


class TestMixingDistribution:
    def test_invariants_enforced(self):
        with pytest.raises(UsageError):
            MixingDistribution(support=(-1, 1), weights=[0.6, 0.6])
        with pytest.raises(UsageError):
            MixingDistribution(support=(-1, 1), weights=[-0.1, 1.1])

    def test_uniform(self):
        m = MixingDistribution.uniform((-1, 0, 1))
        np.testing.assert_allclose(m.weights, 1 / 3)


class TestMixturePredict:
    def test_z_independent_model_ignores_weights(self, rng):
        model = GlmModel(
            link="identity",
            loss="quadratic",
            coefficients=[2.0],
            intercept=0.5,
            protected_levels=(-1, 1),
            protected_effects=[0.0, 0.0],
        )
        X = rng.standard_normal((10, 1))
        for w in ([1.0, 0.0], [0.25, 0.75], [0.5, 0.5]):
            mix = MixingDistribution(support=(-1, 1), weights=w)
            np.testing.assert_allclose(mixture_predict(model, mix, X), model.predict(X, 1))

    def test_loan_model_uniform_mixture_drops_z(self, rng):
        # base - x1 + z mixed uniformly over z in {-1, +1} gives base - x1.
        model = _loan_model(base=0.7)
        X = rng.standard_normal((25, 1))
        mix = MixingDistribution.uniform((-1, 1))
        np.testing.assert_allclose(mixture_predict(model, mix, X), 0.7 - X[:, 0])

    def test_point_mass_equals_counterfactual(self, rng):
        model = _loan_model()
        X = rng.standard_normal((25, 1))
        mix = MixingDistribution(support=(-1, 1), weights=[0.0, 1.0])
        np.testing.assert_allclose(mixture_predict(model, mix, X), model.predict(X, 1))

    def test_support_mismatch_rejected(self, rng):
        model = _loan_model()
        mix = MixingDistribution(support=(0, 1), weights=[0.5, 0.5])
        with pytest.raises(UsageError):
            mixture_predict(model, mix, rng.standard_normal((5, 1)))


class TestOptimizeMixing:
    def test_matches_closed_form_for_binary_quadratic(self, rng):
        # Additive model f(x) + h(z): optimal pi(+1) solves a 1-D quadratic.
        n = 300
        z = rng.choice([-1, 1], size=n)
        X = rng.standard_normal((n, 1))
        y = 1.2 * X[:, 0] + np.where(z == 1, 2.0, -1.0) + 0.3 * rng.standard_normal(n)
        train = Dataset(X=X, z=z, y=y, outcome=CONTINUOUS)
        model = fit_glm(train, "identity", include_protected=True)
        mix = optimize_mixing(model, train, "quadratic")

        f = model.predict(X, -1)  # level -1 predictions
        gap = model.predict(X, 1) - f  # constant: effect difference
        t_closed = float(np.clip(np.mean((y - f) * gap) / np.mean(gap**2), 0.0, 1.0))
        assert mix.weights[1] == pytest.approx(t_closed, abs=1e-6)

    @pytest.mark.parametrize("loss", ["quadratic", "nll"])
    @pytest.mark.parametrize("k", [2, 3])
    def test_matches_simplex_grid_oracle(self, loss, k, rng):
        n = 40
        z = rng.integers(0, k, size=n)
        while len(np.unique(z)) < k:
            z = rng.integers(0, k, size=n)
        X = rng.standard_normal((n, 2))
        if loss == "quadratic":
            y = rng.standard_normal(n) + z.astype(float)
            train = Dataset(X=X, z=z, y=y, outcome=CONTINUOUS)
            model = fit_glm(train, "identity", include_protected=True)
        else:
            y = rng.binomial(1, sigmoid(X[:, 0] + z - 1)).astype(float)
            train = Dataset(X=X, z=z, y=y, outcome=BINARY)
            model = fit_glm(train, "logit", include_protected=True)
        mix = optimize_mixing(model, train, loss)
        P = counterfactual_predictions(model, X)
        solver_obj = grid_search_objective(P, train.y, loss, step=1.0)  # placeholder
        # Evaluate solver objective directly.
        preds = P @ mix.weights
        if loss == "quadratic":
            solver_obj = float(np.mean((preds - train.y) ** 2))
        else:
            c = np.clip(preds, 1e-12, 1 - 1e-12)
            solver_obj = float(-np.mean(train.y * np.log(c) + (1 - train.y) * np.log1p(-c)))
        oracle = grid_search_objective(P, train.y, loss, step=0.005)
        assert abs(solver_obj - oracle) <= 2e-3
        assert solver_obj <= oracle + 1e-9

    def test_flat_objective_returns_uniform(self, rng):
        n = 50
        z = rng.choice([-1, 1], size=n)
        X = rng.standard_normal((n, 1))
        model = GlmModel(
            link="identity",
            loss="quadratic",
            coefficients=[1.0],
            intercept=0.0,
            protected_levels=(-1, 1),
            protected_effects=[0.0, 0.0],
        )
        train = Dataset(X=X, z=z, y=X[:, 0], outcome=CONTINUOUS)
        mix = optimize_mixing(model, train, "quadratic")
        np.testing.assert_allclose(mix.weights, [0.5, 0.5])

    def test_optimum_beats_vertices_and_uniform(self, rng):
        n = 200
        z = rng.choice([-1, 1], size=n)
        X = rng.standard_normal((n, 2))
        y = rng.binomial(1, sigmoid(X[:, 0] + 0.8 * z)).astype(float)
        train = Dataset(X=X, z=z, y=y, outcome=BINARY)
        model = fit_glm(train, "logit", include_protected=True)
        mix = optimize_mixing(model, train, "nll")
        P = counterfactual_predictions(model, X)

        def obj(w):
            c = np.clip(P @ np.asarray(w), 1e-12, 1 - 1e-12)
            return float(-np.mean(y * np.log(c) + (1 - y) * np.log1p(-c)))

        best = obj(mix.weights)
        for w in ([1.0, 0.0], [0.0, 1.0], [0.5, 0.5]):
            assert best <= obj(w) + 1e-9

    def test_loss_must_match_model(self, rng):
        pair = make_loan_pair(100, r=0.0, rng=rng)
        model = fit_glm(pair.perturbed, "identity", include_protected=True)
        with pytest.raises(UsageError):
            optimize_mixing(model, pair.perturbed, "nll")


class TestOimFit:
    def test_no_discrimination_falls_back_to_traditional(self):
        rng = np.random.default_rng(77)
        n = 10_000
        z = rng.choice([-1, 1], size=n)
        X = rng.standard_normal((n, 2))
        u = 1.0 + 0.5 * X[:, 0] - X[:, 1] + rng.standard_normal(n)
        train = Dataset(X=X, z=z, y=u, outcome=CONTINUOUS)
        model = oim_fit(train, "glm-identity")

        # Identity link: the optimal mixture equals the with-Z model averaged
        # under the empirical z shares, exactly (OLS residuals are centered).
        shares = np.array([(z == lvl).mean() for lvl in model.mixing.support])
        averaged = counterfactual_predictions(model.full_model, X) @ shares
        np.testing.assert_allclose(model.predict(X), averaged, atol=1e-6)

        drop_z = fit_glm(train, "identity", include_protected=False)
        oim_risk = float(np.mean((model.predict(X) - u) ** 2))
        assert abs(oim_risk - drop_z.train_risk) <= 1e-3

    def test_no_discrimination_fallback_logistic(self):
        rng = np.random.default_rng(78)
        n = 10_000
        z = rng.choice([-1, 1], size=n)
        X = rng.standard_normal((n, 2))
        u = rng.binomial(1, sigmoid(0.3 + X[:, 0] - 0.5 * X[:, 1])).astype(float)
        train = Dataset(X=X, z=z, y=u, outcome=BINARY)
        model = oim_fit(train, "glm-logit")
        drop_z = fit_glm(train, "logit", include_protected=False)
        preds = np.clip(model.predict(X), 1e-12, 1 - 1e-12)
        oim_risk = float(-np.mean(u * np.log(preds) + (1 - u) * np.log1p(-preds)))
        assert abs(oim_risk - drop_z.train_risk) <= 1e-3

    def test_loan_example_recovers_clean_coefficients(self):
        rng = np.random.default_rng(79)
        pair = make_loan_pair(10_000, r=0.8, beta=1.0, rng=rng)
        model = oim_fit(pair.perturbed, "glm-identity")
        full = model.full_model
        assert full.coefficients[0] == pytest.approx(-1.0, abs=0.02)
        assert full.coefficients[1] == pytest.approx(0.0, abs=0.02)
        # Cross-risk of the mixture on the clean side is near zero.
        cross = float(np.mean((model.predict(pair.clean.X) - pair.clean.y) ** 2))
        assert cross <= 0.02

    def test_constant_shift_is_recovered(self):
        # Perturbation h(z) with nonzero mean: mixture output is f(x) + shift,
        # the shift being the empirical mean of h(z) + noise.
        rng = np.random.default_rng(80)
        n = 10_000
        z = rng.choice([-1, 1], size=n)
        X = rng.standard_normal((n, 2))
        f = 0.5 * X[:, 0] - 1.5 * X[:, 1]
        h = np.where(z == 1, 3.0, 1.0)
        nu = rng.standard_normal(n)
        train = Dataset(X=X, z=z, y=f + h + nu, outcome=CONTINUOUS)
        model = oim_fit(train, "glm-identity")
        shift = float(np.mean(h + nu))
        grid = rng.standard_normal((200, 2))
        fgrid = 0.5 * grid[:, 0] - 1.5 * grid[:, 1]
        deviation = np.abs(model.predict(grid) - fgrid - shift)
        assert deviation.mean() <= 0.05

    def test_predictions_ignore_query_z(self, rng):
        pair = make_loan_pair(500, r=0.5, rng=rng)
        model = oim_fit(pair.perturbed, "glm-identity")
        a = model.predict(pair.clean.X)
        b = model.predict(pair.clean.X, rng.permutation(pair.clean.z))
        np.testing.assert_array_equal(a, b)

    def test_single_level_rejected(self, rng):
        X = rng.standard_normal((50, 2))
        train = Dataset(X=X, z=np.ones(50, dtype=int), y=X[:, 0], outcome=CONTINUOUS)
        with pytest.raises(DegenerateProtectedError):
            oim_fit(train, "glm-identity")

    def test_simplex_invariants_hold_after_fit(self, rng):
        pair = make_loan_pair(300, r=0.3, rng=rng)
        model = oim_fit(pair.perturbed, "glm-identity")
        w = model.mixing.weights
        assert (w >= 0).all()
        assert abs(w.sum() - 1.0) <= 1e-9

    def test_convexity_probe(self, rng):
        n = 150
        z = rng.integers(0, 3, size=n)
        X = rng.standard_normal((n, 2))
        y = rng.binomial(1, sigmoid(X[:, 0] + 0.5 * z)).astype(float)
        train = Dataset(X=X, z=z, y=y, outcome=BINARY)
        model = fit_glm(train, "logit", include_protected=True)
        P = counterfactual_predictions(model, X)

        def obj(w):
            c = np.clip(P @ w, 1e-12, 1 - 1e-12)
            return float(-np.mean(y * np.log(c) + (1 - y) * np.log1p(-c)))

        for _ in range(100):
            a = project_to_simplex(rng.normal(size=3))
            b = project_to_simplex(rng.normal(size=3))
            assert obj((a + b) / 2) <= (obj(a) + obj(b)) / 2 + 1e-9


def _feature_perturbation_pair(n, beta_x, seed, downstream="identity"):
    rng = np.random.default_rng(seed)
    z = rng.choice([-1, 1], size=n)
    x2 = rng.standard_normal(n)
    X = np.column_stack([np.zeros(n), x2])
    fspec = OutcomeSpec(
        family=NORMAL_IDENTITY, coefficients=[0.9], protected_coefficient=beta_x
    )
    family = "normal-identity" if downstream == "identity" else "bernoulli-logistic"
    spec = OutcomeSpec(family=family, coefficients=[1.0, -0.5])
    pert = PerturbationSpec(
        kind="feature-perturbation", feature_index=0, feature_spec=fspec
    )
    return generate_pair(X, z, spec, pert, rng)


class TestChainedOim:
    def test_identity_perturbation_matches_plain_oim(self):
        pair = _feature_perturbation_pair(5000, beta_x=0.0, seed=81)
        chained = chained_oim(pair.perturbed, 0, hypothesis="glm-identity")
        plain = oim_fit(pair.perturbed, "glm-identity")
        # Stage-1 reproduces the clean feature within regression noise.
        corrected = chained.correct_feature(pair.perturbed.X, pair.perturbed.z)
        assert np.abs(corrected - pair.clean.X[:, 0]).max() <= 0.05
        cr_chained = float(np.mean((chained.predict(pair.clean.X) - pair.clean.y) ** 2))
        cr_plain = float(np.mean((plain.predict(pair.clean.X) - pair.clean.y) ** 2))
        assert abs(cr_chained - cr_plain) <= 1e-2

    def test_correction_removes_direct_shift(self):
        pair = _feature_perturbation_pair(5000, beta_x=2.0, seed=82)
        chained = chained_oim(pair.perturbed, 0, hypothesis="glm-identity")
        corrected = chained.correct_feature(pair.perturbed.X, pair.perturbed.z)
        # Corrected column approximates the clean feature.
        assert np.mean((corrected - pair.clean.X[:, 0]) ** 2) <= 0.01
        n = pair.perturbed.n
        assert abs(np.corrcoef(corrected, pair.perturbed.z)[0, 1]) < 3.0 / np.sqrt(n)

    def test_chained_beats_drop_z_on_perturbed_feature(self):
        pair = _feature_perturbation_pair(5000, beta_x=2.0, seed=83)
        chained = chained_oim(pair.perturbed, 0, hypothesis="glm-identity")
        drop_z = fit_glm(pair.perturbed, "identity", include_protected=False)
        cr_chained = float(np.mean((chained.predict(pair.clean.X) - pair.clean.y) ** 2))
        cr_dropz = float(np.mean((drop_z.predict(pair.clean.X) - pair.clean.y) ** 2))
        assert cr_chained < cr_dropz

    def test_metadata_contract(self):
        pair = _feature_perturbation_pair(200, beta_x=1.0, seed=84)
        with pytest.raises(UsageError):
            chained_oim(pair.perturbed, 1, hypothesis="glm-identity")
        # Index defaults to the metadata entry.
        model = chained_oim(pair.perturbed, hypothesis="glm-identity")
        assert model.feature_index == 0
        with pytest.raises(UsageError):
            chained_oim(pair.clean, hypothesis="glm-identity")

    def test_single_feature_rejected(self, rng):
        X = rng.standard_normal((100, 1))
        z = rng.choice([-1, 1], size=100)
        train = Dataset(
            X=X, z=z, y=X[:, 0], outcome=CONTINUOUS, meta={"perturbed_feature": 0}
        )
        with pytest.raises(DataError):
            chained_oim(train, 0, hypothesis="glm-identity")

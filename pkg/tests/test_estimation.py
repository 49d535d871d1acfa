import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadicrdi import choice as ch
from cadicrdi import estimation as est
from cadicrdi.discount import CadiCadi, Exponential, evaluate
from cadicrdi.errors import EmptyDataError, MissingProfileError, RankDeficientCovariatesError
from cadicrdi.lm import fd_steps, jacobian, levenberg_marquardt

from conftest import CADI_CADI

TRUE = CADI_CADI.params()


@pytest.fixture(scope="module")
def cohort():
    data = ch.generate_choices(CADI_CADI, ch.default_design(), 150, seed=42)
    return ch.apply_screen(data, ch.consistency_screen(data))


@pytest.fixture(scope="module")
def cadi_fit(cohort):
    return est.fit(cohort, est.FitSpec("cadi-cadi"))


def test_recovery(cadi_fit):
    p = cadi_fit.params
    assert cadi_fit.converged
    assert abs(p["r"] / TRUE["r"] - 1) < 0.10
    assert abs(p["gamma"] / TRUE["gamma"] - 1) < 0.10
    assert abs(p["delta"] - TRUE["delta"]) < 5e-4
    assert cadi_fit.validity == "Valid"


def test_result_invariants(cadi_fit, cohort):
    assert cadi_fit.n_obs == len(cohort)
    assert cadi_fit.adj_r2 <= cadi_fit.r2
    assert np.all(cadi_fit.std_errors >= 0)
    assert cadi_fit.sse == pytest.approx(float(cadi_fit.residuals @ cadi_fit.residuals))
    # residuals are observed minus predicted
    assert np.allclose(cadi_fit.residuals, ch.residuals(cadi_fit.model(), cohort))


def test_optimizer_soundness(cadi_fit):
    assert len(cadi_fit.start_sse) == 8
    assert all(cadi_fit.sse <= s for s in cadi_fit.start_sse)


def test_jacobian_step_halving(cadi_fit, cohort):
    x, y, t, T, c = ch.record_arrays(cohort)
    from cadicrdi.discount import log_discount_raw
    from scipy.special import expit

    def resid(theta):
        return expit(x - y * np.exp(log_discount_raw("cadi-cadi", dict(zip(("r", "delta", "gamma"), theta)), t, T))) - c

    theta = cadi_fit.estimates
    steps = fd_steps(theta, np.array([1e-2, 1e-4, 1e-2]))
    full = jacobian(resid, theta, steps)
    half = jacobian(resid, theta, steps / 2)
    rel = np.linalg.norm(full - half, axis=0) / np.linalg.norm(full, axis=0)
    assert np.all(rel < 1e-4)


def test_determinism(cohort, cadi_fit):
    again = est.fit(cohort, est.FitSpec("cadi-cadi"))
    assert np.array_equal(again.estimates, cadi_fit.estimates)
    assert again.to_json() == cadi_fit.to_json()


def test_theory_constrained_agrees(cohort, cadi_fit):
    constrained = est.fit(cohort, est.FitSpec("cadi-cadi", bounds=est.THEORY_CONSTRAINED))
    for k, v in cadi_fit.params.items():
        assert constrained.params[k] == pytest.approx(v, rel=0.01)


def test_theory_constrained_stays_in_region(cohort):
    res = est.fit(cohort, est.FitSpec("crdi-cadi", bounds=est.THEORY_CONSTRAINED, n_starts=4))
    assert res.params["alpha"] < 0 and res.params["r"] > 0
    assert res.validity == "Valid"


def test_golden_fixture(fixtures_dir):
    data = ch.read_choices_csv(fixtures_dir / "synthetic_choices.csv")
    golden = json.loads((fixtures_dir / "golden_fit.json").read_text())
    res = est.fit(data, est.FitSpec("cadi-cadi"))
    for k, v in golden["params"].items():
        assert res.params[k] == pytest.approx(v, rel=1e-6)
    assert res.adj_r2 == pytest.approx(golden["adjR2"], abs=1e-8)
    assert res.n_obs == golden["nObs"]


def test_compare_models_ranking(cohort):
    table = est.compare_models(cohort)
    assert table.ranking[0] == "cadi-cadi"
    assert table.ranking[-1] == "exponential"
    assert not table.failures
    rows = table.rows()
    assert rows[0][1:] == list(est.FAMILIES)
    assert [r[0] for r in rows[-7:]] == ["R2", "Adjusted R2", "SSE", "Observations", "Rank", "Status", "Validity"]


def test_exponential_data_not_dominated():
    model = Exponential(0.00587)
    data = ch.generate_choices(model, ch.titrated_design(model), 150, seed=42)
    table = est.compare_models(data)
    best = table.results[0].adj_r2
    expo = next(r for r in table.results if r.family == "exponential")
    assert best - expo.adj_r2 < 0.01


def test_empty_spec_list(cohort):
    assert len(est.compare_models(cohort, [])) == 0


def test_compare_records_failures():
    table = est.compare_models([], [est.FitSpec("exponential")])
    assert "exponential" in table.failures and len(table) == 0


def test_zero_residual_fixture():
    items = []
    for k, (t, T) in enumerate((t, T) for T in (7, 30, 90, 180, 365) for t in (0, 30, 180)):
        F = evaluate(CADI_CADI, t, T)
        items.append(ch.Tradeoff(min(299.0, round(300 * F + (40 if k % 2 else -40))), 300.0, t, T))
    data = ch.generate_choices(CADI_CADI, ch.QuestionnaireDesign(tuple(items)), 10, noise="deterministic")
    res = est.fit(data, est.FitSpec("cadi-cadi"))
    assert res.sse < 1e-8
    assert res.r2 > 0.999


def test_single_record():
    data = ch.generate_choices(CADI_CADI, ch.default_design(), 1)[:1]
    res = est.fit(data, est.FitSpec("cadi-cadi"))
    assert res.converged
    assert math.isnan(res.adj_r2)
    assert res.to_json()["adjR2"] is None


def test_initial_vector_only():
    data = ch.generate_choices(CADI_CADI, ch.default_design(), 20)
    res = est.fit(data, est.FitSpec("cadi-cadi", initial=TRUE, n_starts=1))
    assert len(res.start_sse) == 1
    assert res.params["gamma"] == pytest.approx(TRUE["gamma"], rel=0.2)


def test_fit_spec_validation():
    with pytest.raises(ValueError):
        est.FitSpec("cadi-cadi", gtol=0)
    with pytest.raises(ValueError):
        est.FitSpec("cadi-cadi", n_starts=0)
    with pytest.raises(ValueError):
        est.FitSpec("cadi-cadi", bounds="Boxed")
    with pytest.raises(ValueError):
        est.FitSpec("cadi-cadi", initial={"r": 1.0})
    assert est.FitSpec("CADI_CRDI").family == "cadi-crdi"
    with pytest.raises(EmptyDataError):
        est.fit([], est.FitSpec("cadi-cadi"))


def test_nonconvergence_is_a_status():
    data = ch.generate_choices(CADI_CADI, ch.default_design(), 20)
    res = est.fit(data, est.FitSpec("cadi-cadi", max_iter=1, n_starts=1))
    assert res.status == "NonConvergence"
    assert "stop:max_iter" in res.flags


# --- goodness of fit and robust SEs ------------------------------------------

def test_goodness_of_fit_examples():
    c = np.array([0, 1, 0, 1, 1], dtype=float)
    g = est.goodness_of_fit(np.zeros(5), c, 2)
    assert g.r2 == 1.0 and g.adj_r2 == 1.0
    g = est.goodness_of_fit(c - c.mean(), c, 1)
    assert g.r2 == pytest.approx(0.0, abs=1e-15)
    c = np.r_[np.zeros(50), np.ones(50)]
    sst = 25.0
    e = np.full(100, math.sqrt(sst / 2 / 100))
    g = est.goodness_of_fit(e, c, 3)
    assert g.r2 == pytest.approx(0.5)
    assert g.adj_r2 == pytest.approx(1 - 0.5 * 99 / 96)
    assert g.adj_r2 == pytest.approx(0.4844, abs=1e-4)
    assert math.isnan(est.goodness_of_fit([0.1], [1.0], 3).adj_r2)


def test_robust_se_zero_residuals():
    J = np.random.default_rng(0).normal(size=(30, 3))
    assert np.all(est.robust_se(J, np.zeros(30)).se == 0)


def test_robust_se_homoskedastic_matches_classical():
    rng = np.random.default_rng(42)
    n, p = 2000, 3
    J = rng.normal(size=(n, p))
    e = rng.normal(scale=0.5, size=n)
    classical = np.sqrt(np.diag(e @ e / (n - p) * np.linalg.inv(J.T @ J)))
    hc1 = est.robust_se(J, e)
    assert hc1.kind == "HC1"
    assert np.all(np.abs(hc1.se / classical - 1) < 0.15)


def test_robust_se_hc1_scaling_and_degenerate_dof():
    rng = np.random.default_rng(1)
    J = rng.normal(size=(10, 3))
    e = rng.normal(size=10)
    hc0 = est.robust_se(J, e, kind="HC0")
    hc1 = est.robust_se(J, e)
    assert hc1.se == pytest.approx(hc0.se * math.sqrt(10 / 7))
    square = est.robust_se(J[:3], e[:3])
    assert square.kind == "HC0" and "hc1_undefined" in square.flags


def test_robust_se_singular_flagged():
    J = np.ones((10, 2))
    res = est.robust_se(J, np.linspace(-1, 1, 10))
    assert "near_singular" in res.flags
    assert np.all(np.isfinite(res.se))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.01, 10))
def test_robust_se_scales_with_residuals(seed, scale):
    rng = np.random.default_rng(seed)
    J = rng.normal(size=(20, 2))
    e = rng.normal(size=20)
    assert est.robust_se(J, scale * e).se == pytest.approx(scale * est.robust_se(J, e).se, rel=1e-9)


# --- covariates --------------------------------------------------------------

def test_zero_covariates_reduce_exactly(cohort, cadi_fit):
    profiles = {sid: {"a": 0.0, "b": 0.0} for sid in {r.subject_id for r in cohort}}
    res = est.fit_with_covariates(cohort, profiles, est.FitSpec("cadi-cadi"), est.CovariateSpec(("a", "b")))
    for k in ("r", "delta", "gamma"):
        assert abs(res.params[k] - cadi_fit.params[k]) <= 1e-8
    assert res.params["r:a"] == 0.0 and res.se["gamma:b"] == 0.0
    assert "inert_covariate:a" in res.flags


def test_smoker_offset_recovered():
    smoker = CADI_CADI.replace(r=CADI_CADI.r + 0.05)
    design = ch.titrated_design(CADI_CADI) + ch.titrated_design(smoker)
    ids = ch.subject_ids(150)
    data = (ch.generate_choices(CADI_CADI, design, 75, seed=42, ids=ids[:75])
            + ch.generate_choices(smoker, design, 75, seed=43, ids=ids[75:]))
    profiles = {sid: {"smoker": float(i >= 75)} for i, sid in enumerate(ids)}
    cov = est.CovariateSpec(("smoker",), {"r": ("smoker",)})
    res = est.fit_with_covariates(data, profiles, est.FitSpec("cadi-cadi"), cov)
    assert abs(res.coefficient("r", "smoker") - 0.05) < 0.01
    assert res.covariates == ("smoker",)
    assert res.names == ("r", "delta", "gamma", "r:smoker")


def test_duplicated_covariate_is_rank_deficient(cohort):
    ids = sorted({r.subject_id for r in cohort})
    profiles = {sid: {"a": float(i % 2), "b": float(i % 2)} for i, sid in enumerate(ids)}
    with pytest.raises(RankDeficientCovariatesError):
        est.fit_with_covariates(cohort, profiles, est.FitSpec("cadi-cadi"), est.CovariateSpec(("a", "b")))


def test_constant_covariate_is_rank_deficient(cohort):
    profiles = {r.subject_id: {"a": 1.0} for r in cohort}
    with pytest.raises(RankDeficientCovariatesError):
        est.fit_with_covariates(cohort, profiles, est.FitSpec("cadi-cadi"), est.CovariateSpec(("a",)))


def test_missing_profile(cohort):
    with pytest.raises(MissingProfileError):
        est.fit_with_covariates(cohort, {}, est.FitSpec("cadi-cadi"), est.CovariateSpec(("a",)))


def test_covariates_require_unconstrained(cohort):
    with pytest.raises(ValueError):
        est.fit_with_covariates(cohort, {}, est.FitSpec("cadi-cadi", bounds=est.THEORY_CONSTRAINED),
                                est.CovariateSpec(("a",)))


# --- the optimizer itself ----------------------------------------------------

def test_lm_rosenbrock():
    fun = lambda x: np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])
    res = levenberg_marquardt(fun, [-1.2, 1.0])
    assert res.converged
    assert res.x == pytest.approx([1.0, 1.0], abs=1e-8)


def test_lm_linear_least_squares():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(50, 3))
    b = rng.normal(size=50)
    res = levenberg_marquardt(lambda x: A @ x - b, np.zeros(3))
    assert res.x == pytest.approx(np.linalg.lstsq(A, b, rcond=None)[0], abs=1e-8)


def test_lm_nonfinite_start():
    res = levenberg_marquardt(lambda x: np.array([np.inf]), [-1.0])
    assert res.status == "nonfinite_start" and not res.converged


def test_lm_rejects_nonfinite_steps():
    # residual undefined for x <= 0; the minimum at x = 1e-3 sits near that wall
    fun = lambda x: np.array([np.log(x[0] / 1e-3)]) if x[0] > 0 else np.array([np.nan])
    res = levenberg_marquardt(fun, [5.0])
    assert res.x[0] == pytest.approx(1e-3, rel=1e-6)

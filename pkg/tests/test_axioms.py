import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadicrdi import axioms as ax
from cadicrdi.discount import CadiCadi, CadiCrdi, CrdiCrdi
from cadicrdi.errors import BracketFailureError

from conftest import CADI_CADI, CADI_CRDI, CRDI_CADI, CRDI_CRDI, EXPONENTIAL, HYPERBOLIC, VALID_FOUR

CFG = ax.AxiomCheckConfig()


def test_bundle_table():
    assert ax.BUNDLES["a"] == ("1", "2", "3", "4", "5", "6", "7")
    assert set(ax.BUNDLES["b"]) == {"1", "2", "3'", "4'", "5'", "6", "7"}
    assert set(ax.BUNDLES["c"]) == {"1", "2", "3'", "4", "5", "6", "7"}
    assert set(ax.BUNDLES["d"]) == {"1", "2", "3", "4'", "5'", "6", "7"}


@pytest.mark.parametrize("family", sorted(VALID_FOUR))
def test_each_family_lands_in_its_own_bundle(family):
    result = ax.classify(VALID_FOUR[family], CFG)
    assert result.bundles == [ax.FAMILY_BUNDLE[family]]
    assert result.bundle_passes(family)
    for rep in result.reports.values():
        assert rep.samples_tested >= 10
        if rep.axiom in ax.BUNDLES[ax.FAMILY_BUNDLE[family]] and rep.axiom not in ("6", "7"):
            assert rep.samples_tested >= 200


@pytest.mark.parametrize("family", sorted(VALID_FOUR))
def test_negative_discrimination(family):
    reports = ax.run_all(VALID_FOUR[family], CFG)
    for bundle, axioms in ax.BUNDLES.items():
        if bundle == ax.FAMILY_BUNDLE[family]:
            continue
        worst = max(reports[a].worst_violation for a in axioms if not reports[a].passed)
        assert worst > 1e-3


def test_monotonicity_cadi_cadi():
    one, two = ax.check_monotonicity(CADI_CADI, CFG)
    assert one.passed and two.passed


def test_positive_alpha_breaks_delay_monotonicity():
    one, two = ax.check_monotonicity(CRDI_CADI, CFG)
    assert one.passed
    assert not two.passed
    w = two.witness
    assert CRDI_CADI(w["t1"], w["T"]) >= CRDI_CADI(w["t2"], w["T"])


def test_flat_surface_fails_monotonicity():
    one, two = ax.check_monotonicity(lambda t, T: np.ones_like(t * T), CFG)
    assert not one.passed and not two.passed


def test_geometric_third_log_linear():
    flat = CadiCadi(0.01, 0.001, 0.0)
    assert ax.solve_geometric_third(flat, 0.0, 10.0, 20.0) == pytest.approx(30.0, rel=1e-12)


def test_geometric_third_closed_form():
    g = 0.0124
    oracle = -math.log(2 * math.exp(-g * 20) - math.exp(-g * 10)) / g
    assert ax.solve_geometric_third(CADI_CADI, 0.0, 10.0, 20.0) == pytest.approx(oracle, rel=1e-9)


def test_geometric_third_crdi_closed_form():
    # ln F(t, T) propto T**(b+1): T3 = (2 T2**k - T1**k)**(1/k)
    k = 1 - 0.4446
    oracle = (2 * 20**k - 10**k) ** (1 / k)
    assert ax.solve_geometric_third(CRDI_CRDI, 5.0, 10.0, 20.0) == pytest.approx(oracle, rel=1e-9)


def test_geometric_third_delay_axis():
    # along t, ln F propto exp(-delta t): exp(-d t3) = 2 exp(-d t2) - exp(-d t1)
    d = 0.00017
    oracle = -math.log(2 * math.exp(-d * 20) - math.exp(-d * 10)) / d
    assert ax.solve_geometric_third(CADI_CADI, 30.0, 10.0, 20.0, axis="t", horizon=1e6) == pytest.approx(oracle, rel=1e-9)


def test_geometric_third_equal_points_and_failures():
    assert ax.solve_geometric_third(CADI_CADI, 0.0, 15.0, 15.0) == 15.0
    # gamma large: exp(-g T) cannot fall to 2 exp(-g T2) - exp(-g T1) < 0
    with pytest.raises(BracketFailureError):
        ax.solve_geometric_third(CadiCadi(0.01, 0.001, 0.5), 0.0, 1.0, 10.0)
    with pytest.raises(ValueError):
        ax.solve_geometric_third(CADI_CADI, 0.0, 20.0, 10.0)


def test_ratio_axioms_cadi_cadi():
    assert ax.check_ratio_axiom(CADI_CADI, "3", CFG).worst_violation < 1e-9
    three_prime = ax.check_ratio_axiom(CADI_CADI, "3'", CFG)
    assert not three_prime.passed and three_prime.worst_violation > 1e-3
    assert set(three_prime.witness) == {"t", "T1", "T2", "T3", "shift"}


def test_ratio_axioms_crdi_crdi():
    assert ax.check_ratio_axiom(CRDI_CRDI, "3'", CFG).passed
    assert ax.check_ratio_axiom(CRDI_CRDI, "4'", CFG).passed
    assert not ax.check_ratio_axiom(CRDI_CRDI, "3", CFG).passed


def test_log_linear_interval_satisfies_both_ratio_axioms():
    flat = CadiCrdi(0.01, 0.001, 0.0)
    assert ax.check_ratio_axiom(flat, "3", CFG).passed
    assert ax.check_ratio_axiom(flat, "3'", CFG).passed


def test_total_delay():
    assert ax.check_total_delay(CADI_CADI, "5", CFG).passed
    five_prime = ax.check_total_delay(CADI_CADI, "5'", CFG)
    assert not five_prime.passed and five_prime.witness is not None
    assert ax.check_total_delay(CRDI_CRDI, "5'", CFG).passed
    assert not ax.check_total_delay(CRDI_CRDI, "5", CFG).passed


def test_identity_shifts_pass_trivially():
    additive = ax.AxiomCheckConfig(additive_shift=(0.0, 1e-300))
    multiplicative = ax.AxiomCheckConfig(multiplicative_shift=(1.0, 1.0 + 1e-15))
    assert ax.check_total_delay(CRDI_CRDI, "5", additive).passed
    assert ax.check_total_delay(CADI_CADI, "5'", multiplicative).passed
    assert ax.check_ratio_axiom(CRDI_CRDI, "3", additive).passed


@pytest.mark.parametrize("family", sorted(VALID_FOUR))
def test_boundary_axioms_valid_families(family):
    six, seven = ax.check_boundary(VALID_FOUR[family], CFG)
    assert six.passed and seven.passed


def test_boundary_baselines():
    assert not ax.check_boundary(EXPONENTIAL, CFG)[1].passed
    assert ax.check_boundary(HYPERBOLIC, CFG)[1].passed


def test_exponential_lands_in_no_bundle():
    result = ax.classify(EXPONENTIAL, CFG)
    assert result.bundles == []
    assert not result.bundle_passes("exponential")


def test_degenerate_overlap_is_reported():
    result = ax.classify(CadiCadi(0.0076, 0.00017, 0.0), CFG)
    assert "a" in result.bundles and "c" in result.bundles


def test_determinism():
    a = ax.run_all(CADI_CRDI, CFG)
    b = ax.run_all(CADI_CRDI, CFG)
    assert {k: v.as_json() for k, v in a.items()} == {k: v.as_json() for k, v in b.items()}


def test_user_surface_callable():
    result = ax.classify(lambda t, T: np.exp(-0.0076 * np.exp(-0.00017 * t) * np.expm1(-0.0124 * T) / -0.0124), CFG)
    assert result.bundles == ["a"]


def test_config_validation():
    with pytest.raises(ValueError):
        ax.AxiomCheckConfig(t_range=(5, 1))
    with pytest.raises(ValueError):
        ax.AxiomCheckConfig(multiplicative_shift=(0, 2))
    with pytest.raises(ValueError):
        ax.check_ratio_axiom(CADI_CADI, "5")
    with pytest.raises(TypeError):
        ax.as_surface(3.0)


@settings(max_examples=20, deadline=None)
@given(r=st.floats(1e-3, 0.05), alpha=st.floats(-0.5, -0.01), beta=st.floats(-0.8, 0.5))
def test_random_crdi_crdi_in_bundle_b(r, alpha, beta):
    if abs(beta) < 1e-3:
        return
    cfg = ax.AxiomCheckConfig(samples=60)
    assert "b" in ax.classify(CrdiCrdi(r, alpha, beta), cfg).bundles

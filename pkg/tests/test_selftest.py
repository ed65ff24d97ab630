import math

import numpy as np
import pytest

from memcert import sdp
from memcert.correlations import CountsTable, DataError
from memcert.selftest import (
    S_STAR, TSIRELSON, CertificationReport, CertifyConfig, ScenarioInputs, certify, fmin_pmin, g_bound,
    lambda_i, scenario1_bound, scenario2_bound, scenario3_bound, singlet_fidelity_bound, t_interval,
)
from memcert.simulate import ExperimentModel, expected_counts, ideal_model, lossy_povm, optimal_chsh_povms, sample_counts

# exact evaluation at the reported scores; see test_fixture_scenario1 for the rounded figure
F_I, F_O = singlet_fidelity_bound(2.733), singlet_fidelity_bound(2.64)


def test_singlet_fidelity_examples():
    assert singlet_fidelity_bound(TSIRELSON) == pytest.approx(1.0)
    assert S_STAR == pytest.approx(2.105823, abs=1e-6)
    assert singlet_fidelity_bound(S_STAR) == pytest.approx(0.5)
    assert singlet_fidelity_bound(2.733) == pytest.approx(0.933970, abs=1e-6)
    assert singlet_fidelity_bound(2.64) == pytest.approx(0.869619, abs=1e-6)
    assert singlet_fidelity_bound(2.0) == pytest.approx(0.426777, abs=1e-6)
    assert singlet_fidelity_bound(-4) == 0.0
    with pytest.raises(ValueError):
        singlet_fidelity_bound(4.5)


def test_singlet_fidelity_affine():
    s = np.linspace(2.0, 2.8, 7)
    vals = np.array([singlet_fidelity_bound(x) for x in s])
    assert np.allclose(np.diff(vals, 2), 0, atol=1e-12)


def test_lambda_i_examples():
    assert lambda_i(1.0, 1.0) == pytest.approx(0.5)
    assert lambda_i(0.3) == 1.0
    assert lambda_i(0.93, 1.0) == pytest.approx(0.755147, abs=1e-6)
    assert lambda_i(0.93, 1.0) == pytest.approx(sdp.lambda_max_sdp(0.93, 1.0), abs=1e-6)


def test_scenario1_examples():
    assert scenario1_bound(1.0, 1.0) == pytest.approx(1.0)
    assert scenario1_bound(0.9, 0.4) == 0.0
    for f_o in np.linspace(0.55, 0.99, 10):
        assert scenario1_bound(1.0, f_o) == pytest.approx(f_o, abs=1e-12)


def test_fixture_scenario1():
    # branch 1 applies: 1/(2 f_o) = 0.574964 <= lambda_i = 0.748335
    assert lambda_i(F_I) == pytest.approx(0.748335, abs=1e-6)
    assert 1 / (2 * F_O) < lambda_i(F_I)
    value = scenario1_bound(F_I, F_O)
    assert value == pytest.approx(0.864705, abs=1e-6)
    # the rounded figure 0.86468 corresponds to f_o = 0.8696
    assert value == pytest.approx(0.86468, abs=1e-4)
    assert scenario1_bound(F_I, 0.8696) == pytest.approx(0.864684, abs=1e-6)
    assert value == pytest.approx(sdp.g_sdp(F_O, 1 / (2 * F_O)), abs=1e-6)


def test_scenario1_monotone_and_continuous():
    f = np.linspace(0.5, 1, 50)
    table = np.array([[scenario1_bound(a, b) for b in f] for a in f])
    assert np.all(np.diff(table, axis=1) >= -1e-12)
    assert np.all(np.diff(table, axis=0) >= -1e-12)
    for f_o in np.linspace(0.51, 0.99, 20):
        lam = 1 / (2 * f_o)
        assert g_bound(f_o, lam) == pytest.approx((f_o + math.sqrt(2 * f_o - 1)) / 2, abs=1e-9)


def test_scenario1_relative_to_output_fidelity():
    # in branch 1 the deterministic bound sits below f_o, never above
    for f_o in np.linspace(0.55, 1, 10):
        assert scenario1_bound(1.0 - 1e-9, f_o) <= f_o + 1e-9
        assert scenario1_bound(0.6, f_o) <= f_o + 1e-12


def test_scenario2_examples():
    assert scenario2_bound(0.8696, 0.3) == (0.8696, 0.15)
    assert scenario2_bound(0.9, 1.0)[1] == 0.5
    assert scenario2_bound(0.0, 0.0) == (0.0, 0.0)


def test_t_interval():
    assert t_interval(1.0, 1.0) == (1.0, 1.0)
    lo, hi = t_interval(0.93, 1.0)
    assert lo == pytest.approx((1 - 0.755147) / 0.755147, abs=1e-5) and hi == 1.0


def test_scenario3_single_point_interval():
    for f_o, p_o in ((0.9, 0.8), (0.8696, 1.0), (0.7, 0.4)):
        r = fmin_pmin(1.0, f_o, 1.0, p_o)
        assert r["fidelity"] == pytest.approx(f_o * p_o / sdp.b_max_sdp(f_o, p_o, 1.0), abs=1e-6)
        assert r["success"] == pytest.approx(p_o, abs=1e-6)


def test_scenario3_perfect():
    assert scenario3_bound(ScenarioInputs(1.0, 1.0, 1.0, 1.0, "S3")) == pytest.approx((1.0, 1.0), abs=1e-6)


def test_scenario3_fixture():
    r = fmin_pmin(0.93397, 0.8696, 1.0, 1.0)
    lo, hi = r["t_interval"]
    assert lo <= r["t_fidelity"] <= hi and lo <= r["t_success"] <= hi
    assert 0 <= r["fidelity"] <= 0.8696 + 1e-6
    assert r["fidelity"] == pytest.approx(0.795865, abs=1e-6)
    assert r["success"] == pytest.approx(0.632390, abs=1e-6)
    assert r["t_success"] == pytest.approx(lo)


def test_scenario_inputs_validation():
    with pytest.raises(ValueError):
        ScenarioInputs(1.2, 0.9)
    with pytest.raises(ValueError):
        ScenarioInputs(0.9, 0.9, 0.5, 1.0, "S1")
    with pytest.raises(ValueError):
        ScenarioInputs(0.9, 0.9, scenario="S4")


def test_report_validation_and_round_trip():
    counts = expected_counts(ideal_model(), 10 ** 9)
    rep = certify(CountsTable("input", counts.counts), CountsTable("output", counts.counts), CertifyConfig("S1"))
    assert CertificationReport.from_dict(rep.to_dict()) == rep
    d = rep.to_dict()
    d["fidelity_bound"] = 1.5
    with pytest.raises(ValueError):
        CertificationReport.from_dict(d)


def test_certify_ideal_scenario1():
    ci = expected_counts(ideal_model(), 10 ** 9, "input")
    co = expected_counts(ideal_model(), 10 ** 9, "output")
    rep = certify(ci, co, CertifyConfig("S1"))
    assert rep.fidelity_bound == pytest.approx(1.0, abs=1e-6)
    assert rep.success_bound == 1.0 and rep.warnings == []


def test_certify_fixture(data_dir):
    path = data_dir / "tiranov_energy_time.json"
    ci, co = CountsTable.load(path, "input"), CountsTable.load(path, "output")
    s2 = certify(ci, co, CertifyConfig("S2", "wfs", "wfs", "wfs"))
    assert s2.s_i.value == pytest.approx(2.733, abs=1e-9) and s2.s_o.value == pytest.approx(2.64, abs=1e-9)
    assert s2.fidelity_bound >= 0.8696 and s2.success_bound is None
    assert any("conditional detection unavailable" in w for w in s2.warnings)
    s1 = certify(ci, co, CertifyConfig("S1"))
    assert s1.fidelity_bound == pytest.approx(0.864705, abs=1e-6)


def test_certify_wfs_success_bound():
    a, b = optimal_chsh_povms()
    m = ExperimentModel(ideal_model().source, tuple(a), tuple(lossy_povm(x, 0.4) for x in b))
    co = expected_counts(m, 10 ** 9, "output")
    rep = certify(None, co, CertifyConfig("S2", "none", "wfs", "wfs"))
    assert rep.fidelity_bound == pytest.approx(1.0, abs=1e-6)
    assert rep.p_o == pytest.approx(0.4, abs=1e-6) and rep.success_bound == pytest.approx(0.2, abs=1e-6)


def test_certify_binning_without_assumption():
    a, b = optimal_chsh_povms()
    m = ExperimentModel(ideal_model().source, tuple(a), tuple(lossy_povm(x, 0.4) for x in b))
    co = expected_counts(m, 10 ** 9, "output")
    rep = certify(None, co, CertifyConfig("S2"))
    # binned no-clicks pull the score towards the local region
    assert rep.s_o.value < 2 and rep.fidelity_bound < 0.5


def test_certify_scenario3_ideal():
    ci = expected_counts(ideal_model(), 10 ** 9, "input")
    co = expected_counts(ideal_model(), 10 ** 9, "output")
    rep = certify(ci, co, CertifyConfig("S3", "none", "wfs", "wfs"))
    assert rep.fidelity_bound == pytest.approx(1.0, abs=1e-6)
    # rounding leaves f_i = 1 - 3e-9; lambda_i moves by its square root and opens the t interval
    assert 1 - rep.details["t_interval"][0] == pytest.approx(2.3e-4, abs=1e-5)
    assert rep.details["t_interval"][0] - 1e-6 <= rep.success_bound <= 1.0
    assert rep.success_bound == pytest.approx(1.0, abs=2e-4)


def test_certify_errors():
    co = expected_counts(ideal_model(), 1000, "output")
    with pytest.raises(DataError):
        certify(None, co, CertifyConfig("S1"))
    with pytest.raises(DataError):
        certify(co, co, CertifyConfig("S2"))
    with pytest.raises(DataError):
        certify(None, expected_counts(ideal_model(), 1000, "input"), CertifyConfig("S2"))
    with pytest.raises(ValueError):
        CertifyConfig("S2", "maybe")


def test_certify_low_output_fidelity_warns():
    a, b = optimal_chsh_povms()
    from memcert.qcore import DensityOperator
    noisy = ExperimentModel(DensityOperator.maximally_mixed((2, 2)), tuple(a), tuple(b))
    rep = certify(expected_counts(ideal_model(), 10 ** 6, "input"), expected_counts(noisy, 10 ** 6, "output"),
                  CertifyConfig("S1"))
    assert rep.fidelity_bound == 0.0 and any("f_o <= 1/2" in w for w in rep.warnings)


def test_certify_is_deterministic_under_seed():
    runs = [certify(None, sample_counts(ideal_model(), 500, seed=3, phase="output"), CertifyConfig("S2")).to_dict()
            for _ in range(2)]
    assert runs[0] == runs[1]

import json
import math

import numpy as np
import pytest

from memcert.channels import KrausChannel, amplitude_damping, identity_channel
from memcert.correlations import DataError, chsh, conditional_detection, post_select, signaling_diagnostic
from memcert.oracle import filter_k_lambda, phi_lambda
from memcert.qcore import DensityOperator, random_density
from memcert.simulate import (
    ExperimentModel, Povm, exact_correlations, expected_counts, filter_povm, ideal_model, lossy_povm,
    model_from_json, model_to_json, optimal_chsh_povms, projective, sample_counts,
)

TSIRELSON = 2 * math.sqrt(2)


def random_povm(rng, dim=2):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = g + g.conj().T
    return projective(np.eye(dim) - 2 * np.outer(np.linalg.eigh(h)[1][:, 0], np.linalg.eigh(h)[1][:, 0].conj()))


def random_model(rng):
    eff = rng.uniform(0.2, 1.0, size=4)
    a = tuple(lossy_povm(random_povm(rng), e) for e in eff[:2])
    b = tuple(lossy_povm(random_povm(rng), e) for e in eff[2:])
    return ExperimentModel(random_density((2, 2), rng), a, b, amplitude_damping(rng.uniform()))


def test_povm_validation():
    with pytest.raises(ValueError):
        Povm((np.eye(2), np.eye(2)))
    with pytest.raises(ValueError):
        Povm((np.diag([1.0, -0.5]), np.diag([0.0, 1.5])))
    assert projective(np.diag([1, -1])).efficient


def test_exact_correlations_examples():
    assert chsh(post_select(exact_correlations(ideal_model()))).value == pytest.approx(TSIRELSON, abs=1e-12)
    a, b = optimal_chsh_povms()
    mixed = ExperimentModel(DensityOperator.maximally_mixed((2, 2)), tuple(a), tuple(b))
    assert chsh(post_select(exact_correlations(mixed))).value == pytest.approx(0.0, abs=1e-12)


def test_heralding_filter_gives_maximal_score():
    lam = 0.7
    a, b = optimal_chsh_povms()
    # filter |1> amplitude up relative to |0> so that Phi_lam is mapped onto Phi+
    herald = KrausChannel(2, 2, (np.diag([math.sqrt((1 - lam) / lam), 1.0]),))
    m = ExperimentModel(phi_lambda(lam).density(), tuple(a), tuple(b), herald)
    p = exact_correlations(m)
    assert chsh(post_select(p)).value == pytest.approx(TSIRELSON, abs=1e-12)
    assert conditional_detection(p) < 1


def test_models_are_non_signaling_and_obey_tsirelson(rng):
    for _ in range(50):
        p = exact_correlations(random_model(rng))
        assert signaling_diagnostic(p) <= 1e-10
        assert abs(chsh(post_select(p)).value) <= TSIRELSON + 1e-9


def test_dimension_mismatch():
    a, b = optimal_chsh_povms()
    with pytest.raises(ValueError):
        ExperimentModel(ideal_model().source, tuple(a), tuple(b), identity_channel(3))


def test_sampling_examples():
    big = sample_counts(ideal_model(), 10 ** 6, seed=5)
    from memcert.correlations import correlations_from_counts
    assert abs(chsh(post_select(correlations_from_counts(big))).value - TSIRELSON) < 0.01
    one = sample_counts(ideal_model(), 1, seed=5)
    assert np.all(one.totals() == 1)
    again = sample_counts(ideal_model(), 1000, seed=9)
    assert np.array_equal(again.counts, sample_counts(ideal_model(), 1000, seed=9).counts)
    assert not np.array_equal(again.counts, sample_counts(ideal_model(), 1000, seed=10).counts)
    with pytest.raises(ValueError):
        sample_counts(ideal_model(), 0, seed=1)


def test_expected_counts_are_exact():
    c = expected_counts(ideal_model(), 10 ** 9)
    assert c.counts[0, 0, 0, 0] == round(10 ** 9 * (2 + math.sqrt(2)) / 8)


def test_lossy_povm_examples():
    base = projective(np.diag([1.0, -1.0]))
    assert all(np.allclose(x, y) for x, y in zip(lossy_povm(base, 1.0).elements, base.elements))
    assert np.allclose(lossy_povm(base, 0.5).elements[2], np.eye(2) / 2)
    with pytest.raises(ValueError):
        lossy_povm(base, 1.5)
    # the state-independent loss is the filter sqrt(eta) I followed by the efficient measurement
    eta = 0.37
    filt = filter_povm(base, math.sqrt(eta) * np.eye(2))
    assert all(np.allclose(x, y) for x, y in zip(lossy_povm(base, eta).elements, filt.elements))


def test_outcome_dependent_loss_is_not_fair():
    a, b = optimal_chsh_povms()
    src = ideal_model().source
    unfair = ExperimentModel(src, tuple(a), tuple(lossy_povm(x, 0.3, "setting_dependent") for x in b))
    ps = post_select(exact_correlations(unfair))
    assert np.abs(ps.p - exact_correlations(ideal_model()).p[:, :, :2, :2]).max() > 1e-3


def test_sfs_identity(rng):
    for _ in range(10):
        src = random_density((2, 2), rng)
        a = tuple(random_povm(rng) for _ in range(2))
        b = tuple(random_povm(rng) for _ in range(2))
        etas = rng.uniform(0.05, 1, size=4)
        lossy = ExperimentModel(src, tuple(lossy_povm(p, e) for p, e in zip(a, etas[:2])),
                                tuple(lossy_povm(p, e) for p, e in zip(b, etas[2:])))
        ref = post_select(exact_correlations(ExperimentModel(src, a, b)))
        assert np.abs(post_select(exact_correlations(lossy)).p - ref.p).max() <= 1e-10


def test_model_json_round_trip(tmp_path):
    m = ideal_model(filter_k_lambda(0.8))
    doc = json.loads(json.dumps(model_to_json(m)))
    back = model_from_json(doc)
    assert np.allclose(exact_correlations(back).p, exact_correlations(m).p)


@pytest.mark.parametrize("mutate, key", [
    (lambda d: d.pop("source"), "source"),
    (lambda d: d["povms_a"][0].pop("1"), "'1'"),
    (lambda d: d["povms_b"][1].update({"x": d["povms_b"][1]["0"]}), "'x'"),
    (lambda d: d.update({"povms_a": d["povms_a"][:1]}), "povms_a"),
])
def test_model_json_errors(mutate, key):
    doc = model_to_json(ideal_model())
    mutate(doc)
    with pytest.raises(DataError, match=key):
        model_from_json(doc)

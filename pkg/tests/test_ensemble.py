from itertools import combinations, product

import numpy as np
import pytest

from oracles import random_unit
from qensemble.circuits import VARIANT_IDS, build_core_variant, build_onevsall
from qensemble.ensemble import (
    ClassifierModel,
    EnsembleModel,
    EvalCounter,
    OneVsOneModel,
    arbitrate,
    calibrate_gamma,
    combine,
    decode_bits,
    error_correct,
    gamma_from_confidences,
    onevsone_count,
    predict,
    predict_onevsone,
    predict_plain_ensemble,
    corrected_count,
    sgn,
    weighted_bit_vote,
)
from qensemble.errors import ConfigurationError


class FixedModel(ClassifierModel):
    """Returns preset outputs, either one row for every sample or one row per sample."""

    def __init__(self, out, variant="V1", weight=1.0, role="core", target=()):
        spec = build_core_variant(variant, 1) if role == "core" else build_onevsall(1)
        super().__init__(spec, np.zeros(spec.num_params), weight, role, target)
        self.out = np.atleast_2d(np.asarray(out, dtype=np.float64))

    def outputs(self, features, noise=None, rng=None, shots=None, counter=None):
        b = np.atleast_2d(features).shape[0]
        if counter is not None:
            counter.circuit_evals += b
        return np.broadcast_to(self.out, (b, self.out.shape[1])).copy()


def _cores(outs, weights=None):
    weights = weights or [1.0] * 5
    return [FixedModel(o, v, w) for o, v, w in zip(outs, VARIANT_IDS, weights)]


def _ova(values):
    return [FixedModel([[v]], role="ova", target=(c,)) for c, v in enumerate(values)]


def test_sgn_zero_is_positive():
    np.testing.assert_array_equal(sgn([-0.5, 0.0, 2.0]), [-1, 1, 1])


def test_decode_examples():
    assert decode_bits([1, -1, 1]) == 5
    assert decode_bits([-1, -1, -1]) == 0
    assert decode_bits([0.0]) == 1


@pytest.mark.parametrize("n", [1, 2, 3])
def test_decode_bijection(n):
    patterns = np.array(list(product([-1, 1], repeat=n)))
    classes = decode_bits(patterns)
    assert sorted(classes.tolist()) == list(range(1 << n))
    # product enumerates in MSB-first binary order
    np.testing.assert_array_equal(classes, np.arange(1 << n))


def test_weighted_vote_example():
    members = [FixedModel([[0.5]], "V1", 0.9), FixedModel([[-0.8]], "V2", 0.6)]
    conf = weighted_bit_vote(members, np.zeros(32), 1)
    assert conf.sums[0, 0] == pytest.approx(-0.02, abs=1e-12)
    assert sgn(conf.sums[0, 0]) == -1


def test_weighted_vote_unanimous():
    conf = weighted_bit_vote(_cores([[1, 1, 1, 1, 1]] * 5), np.zeros(32), 3)
    np.testing.assert_array_equal(conf.sums, [[1, 1, 1]])


def test_weighted_vote_equal_weights_is_mean(rng):
    outs = rng.uniform(-1, 1, size=(5, 1, 5))
    conf = weighted_bit_vote(_cores(list(outs), [0.7] * 5), np.zeros(32), 3)
    np.testing.assert_allclose(conf.sums, outs.mean(axis=0)[:, :3], atol=1e-15)


def test_weighted_vote_zero_weights():
    with pytest.raises(ConfigurationError):
        weighted_bit_vote(_cores([[1, 1, 1, 1, 1]] * 5, [0.0] * 5), np.zeros(32), 3)


def test_confidence_bounds_and_weakest(rng):
    outs = rng.uniform(-1, 1, size=(5, 40, 5))
    sums = combine(outs, rng.uniform(0.1, 1, 5))
    assert np.all(np.abs(sums) <= 1 + 1e-9)
    conf = weighted_bit_vote(_cores(list(outs[:, :1]), None), np.zeros(32), 3, gamma=0.3)
    assert conf.weakest[0] == np.argmin(np.abs(conf.sums[0]))


@pytest.mark.parametrize(
    "voted, c1, c2, expected",
    [(1, -0.7, 0.4, -1), (1, -0.2, -0.3, 1), (-1, -0.2, -0.3, -1), (-1, 0.5, -0.6, 1), (1, 0.2, 0.3, 1)],
)
def test_arbitrate_rule(voted, c1, c2, expected):
    assert arbitrate(voted, c1, c2) == expected


def _ensemble(core_out, ova_values, gamma, nbits=3):
    return EnsembleModel(_cores([core_out] * 5), _ova(ova_values), gamma, nbits)


def test_error_correct_x01_example():
    # voted +,-,+ (class 5) with the MSB weakest; 1VsAll says yes, 5VsAll says no
    ova = [0.9] * 8
    ova[1], ova[5] = -0.7, 0.4
    ens = _ensemble([0.05, -0.9, 0.8, 0, 0], ova, gamma=0.5)
    counter = EvalCounter()
    assert predict(ens, np.zeros(32), counter=counter) == 1
    assert counter.flagged == 1 and counter.ova_evals == 2


def test_error_correct_both_claim_keeps_vote():
    ova = [0.9] * 8
    ova[1], ova[5] = -0.2, -0.3
    ens = _ensemble([0.05, -0.9, 0.8, 0, 0], ova, gamma=0.5)
    assert predict(ens, np.zeros(32)) == 5


def test_error_correct_sets_bit():
    ova = [0.9] * 8
    ova[1], ova[5] = 0.5, -0.6
    ens = _ensemble([-0.05, -0.9, 0.8, 0, 0], ova, gamma=0.5)
    assert predict(ens, np.zeros(32)) == 5


def test_unflagged_skips_ova():
    ens = _ensemble([0.9, -0.9, 0.8, 0, 0], [-1.0] * 8, gamma=0.5)
    counter = EvalCounter()
    assert predict(ens, np.zeros(32), counter=counter) == 5
    assert counter.ova_evals == 0 and counter.flagged == 0
    assert counter.circuit_evals == 5


def test_gamma_zero_never_triggers(rng):
    outs = rng.uniform(-1, 1, size=(5, 1, 5))
    ens = EnsembleModel(_cores(list(outs)), _ova([-1.0] * 8), 0.0, 3)
    counter = EvalCounter()
    feats = np.zeros((30, 32))
    got = predict(ens, feats, counter=counter)
    assert counter.flagged == 0
    np.testing.assert_array_equal(got, decode_bits(sgn(ens.vote(feats).sums)))


def test_gamma_above_one_always_triggers():
    ens = _ensemble([1, 1, 1, 1, 1], [0.5] * 8, gamma=1.01)
    counter = EvalCounter()
    predict(ens, np.zeros((7, 32)), counter=counter)
    assert counter.flagged == 7


def test_error_correct_touches_only_weakest(rng):
    outs = rng.uniform(-1, 1, size=(5, 1, 5))
    for _ in range(20):
        ova = rng.uniform(-1, 1, 8)
        ens = EnsembleModel(_cores(list(outs)), _ova(ova), 1.01, 3)
        conf = ens.vote(np.zeros((1, 32)))
        fixed = error_correct(ens, conf, np.zeros((1, 32)))
        voted = sgn(conf.sums)
        diff = np.flatnonzero(fixed[0] != voted[0])
        assert set(diff) <= {conf.weakest[0]}


def test_weight_scaling_invariance(rng):
    for _ in range(10):
        outs = list(rng.uniform(-1, 1, size=(5, 1, 5)))
        w = rng.uniform(0.1, 0.5, 5)
        ova = rng.uniform(-1, 1, 8)
        a = EnsembleModel(_cores(outs, list(w)), _ova(ova), 0.3, 3)
        b = EnsembleModel(_cores(outs, list(2 * w)), _ova(ova), 0.3, 3)
        assert predict(a, np.zeros(32)) == predict(b, np.zeros(32))


def test_ensemble_validation():
    with pytest.raises(ConfigurationError):
        EnsembleModel(_cores([[1] * 5] * 5)[:4], _ova([1] * 8), 0.1, 3)
    same = [FixedModel([[1] * 5], "V1") for _ in range(5)]
    with pytest.raises(ConfigurationError):
        EnsembleModel(same, _ova([1] * 8), 0.1, 3)
    with pytest.raises(ConfigurationError):
        EnsembleModel(_cores([[1] * 5] * 5), _ova([1] * 4), 0.1, 3)
    ens = EnsembleModel(_cores([[1] * 5] * 5), _ova([1] * 8), 0.1, 3)
    assert len(ens.models) == 13 == corrected_count(8)


def test_gamma_ten_values():
    vals = np.arange(1, 11) / 10
    g = gamma_from_confidences(vals)
    assert (vals < g).sum() == 1


def test_gamma_equal_values():
    vals = np.full(50, 0.4)
    g = gamma_from_confidences(vals)
    assert g < 0.4 and (vals < g).sum() == 0


def test_gamma_errors():
    with pytest.raises(ValueError):
        gamma_from_confidences([])
    with pytest.raises(ValueError):
        gamma_from_confidences(np.ones(9))


def test_gamma_fraction_near_ten_percent(rng):
    vals = rng.uniform(0, 1, 1000)
    g = gamma_from_confidences(vals)
    assert (vals < g).sum() == 100


class LinearModel(ClassifierModel):
    """Outputs ``scale * tanh(features @ w)``, a cheap stand-in with per-sample variety."""

    def __init__(self, w, variant, scale=1.0):
        spec = build_core_variant(variant, 1)
        super().__init__(spec, np.zeros(spec.num_params))
        self.w, self.scale = w, scale

    def outputs(self, features, noise=None, rng=None, shots=None, counter=None):
        return self.scale * np.tanh(np.atleast_2d(features) @ self.w)


def test_calibration_scaling_equivariance(rng):
    ws = [rng.normal(size=(32, 5)) for _ in range(5)]
    feats = np.array([random_unit(rng, 32) for _ in range(200)])
    flagged = []
    for scale in (1.0, 0.37):
        cores = [LinearModel(w, v, scale) for w, v in zip(ws, VARIANT_IDS)]
        g = calibrate_gamma(cores, feats, 3)
        flagged.append(weighted_bit_vote(cores, feats, 3, g).flagged)
    np.testing.assert_array_equal(flagged[0], flagged[1])
    assert flagged[0].sum() == 20


def test_calibrate_needs_samples():
    with pytest.raises(ValueError):
        calibrate_gamma(_cores([[1] * 5] * 5), np.zeros((0, 32)), 3)


def _pair_models(k, winner_of):
    """Pair models whose output encodes ``winner_of(a, b)``."""
    out = []
    for a, b in combinations(range(k), 2):
        val = -0.5 if winner_of(a, b) == a else 0.5
        out.append(FixedModel([[val]], role="ovo", target=(a, b)))
    return out


def test_onevsone_counts():
    assert onevsone_count(8) == 28
    assert onevsone_count(4) == 6 and corrected_count(4) == 9
    model = OneVsOneModel(_pair_models(8, min), 8)
    assert len(model.models) == 28


def test_onevsone_unanimous_winner():
    # A > B, B > C, A > C
    assert predict_onevsone(_pair_models(3, min), np.zeros(32), 3) == 0


def test_onevsone_cyclic_tie():
    # 0 beats 1, 1 beats 2, 2 beats 0
    def cyc(a, b):
        return {(0, 1): 0, (1, 2): 1, (0, 2): 2}[(a, b)]

    assert predict_onevsone(_pair_models(3, cyc), np.zeros(32), 3) == 0


def test_onevsone_missing_pair():
    models = _pair_models(4, min)[:-1]
    with pytest.raises(ConfigurationError):
        OneVsOneModel(models, 4)
    with pytest.raises(ConfigurationError):
        predict_onevsone(models, np.zeros(32), 4)


def test_onevsone_zero_output_votes_second():
    models = [FixedModel([[0.0]], role="ovo", target=(0, 1))]
    assert predict_onevsone(models, np.zeros(32), 2) == 1


def test_plain_majority_three_vs_two():
    outs = [[0.2, -1, 1], [0.3, -1, 1], [0.1, -1, 1], [-0.9, -1, 1], [-0.9, -1, 1]]
    members = [FixedModel([o + [0, 0]], "V2") for o in outs]
    # the mean of bit 0 is negative but three of five members say +1
    assert predict_plain_ensemble(members, np.zeros(32), 3) == 5


def test_plain_identical_members(rng):
    out = rng.uniform(-1, 1, (1, 5))
    members = [FixedModel(out, "V2") for _ in range(5)]
    assert predict_plain_ensemble(members, np.zeros(32), 3) == decode_bits(sgn(out[0, :3]))


def test_plain_matches_weighted_vote_when_saturated(rng):
    # with +-1 outputs the sign of the equal-weight mean is the majority sign
    for _ in range(50):
        outs = np.where(rng.random((5, 1, 5)) < 0.5, -1.0, 1.0)
        members = [FixedModel(o, "V2") for o in outs]
        plain = predict_plain_ensemble(members, np.zeros(32), 3)
        voted = decode_bits(sgn(weighted_bit_vote(_cores(list(outs)), np.zeros(32), 3).sums[0]))
        assert plain == voted


def test_plain_batched_with_real_circuits(rng):
    spec = build_core_variant("V2", 1)
    members = [ClassifierModel(spec, rng.uniform(0, 1, spec.num_params)) for _ in range(5)]
    feats = np.array([random_unit(rng, 32) for _ in range(6)])
    batch = predict_plain_ensemble(members, feats, 2)
    single = [predict_plain_ensemble(members, f, 2) for f in feats]
    np.testing.assert_array_equal(batch, single)


def test_classifier_model_validation():
    spec = build_core_variant("V1", 1)
    with pytest.raises(ValueError):
        ClassifierModel(spec, np.zeros(3))
    with pytest.raises(ValueError):
        ClassifierModel(spec, np.zeros(spec.num_params), accuracy_weight=1.5)
    with pytest.raises(ValueError):
        ClassifierModel(spec, np.zeros(spec.num_params), role="boss")


def test_counter_merge():
    a = EvalCounter(1, 2, 3, 4).merge(EvalCounter(10, 20, 30, 40))
    assert (a.circuit_evals, a.ova_evals, a.flagged, a.samples) == (11, 22, 33, 44)


def test_real_ensemble_batched_matches_single(rng):
    cores = [ClassifierModel(build_core_variant(v, 1), rng.uniform(0, 1, 15), 0.5) for v in VARIANT_IDS]
    ova = [ClassifierModel(build_onevsall(1), rng.uniform(0, 1, 15), role="ova", target=(c,)) for c in range(4)]
    ens = EnsembleModel(cores, ova, 0.4, 2)
    feats = np.array([random_unit(rng, 32) for _ in range(12)])
    np.testing.assert_array_equal(ens.predict(feats), [ens.predict(f) for f in feats])

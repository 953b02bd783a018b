import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from vowsn_asr.errors import ConfigError, ModelLookupError, ShapeError, UndefinedLikelihoodError
from vowsn_asr.frontend import FeatureMatrix
from vowsn_asr.models import (
    SENT_END,
    SENT_START,
    VARIANCE_FLOOR,
    BigramLm,
    GaussianMixture,
    Lexicon,
    ModelBundle,
    PhoneHmm,
    WordHmm,
    compose_word_hmm,
    concatenate_hmms,
    fit_gmm_em,
    forward_log_likelihood,
    gmm_log_density,
    left_to_right_transitions,
    lm_log_prob,
    train_bigram,
    viterbi_align,
)

# log(1 / sqrt(2 pi)) to 16 significant digits (mpmath, 40 digits).
LOG_STD_NORMAL_AT_0 = -0.9189385332046727


def unit_gmm(mean=0.0, dim=1):
    return GaussianMixture([1.0], np.full((1, dim), mean), np.ones((1, dim)))


class TestGmmDensity:
    def test_standard_normal_at_zero(self):
        assert gmm_log_density(unit_gmm(), [0.0]) == pytest.approx(LOG_STD_NORMAL_AT_0, abs=1e-12)

    def test_equal_components_equal_single(self):
        single = GaussianMixture([1.0], [[1.0, -2.0]], [[0.5, 3.0]])
        double = GaussianMixture([0.5, 0.5], [[1.0, -2.0]] * 2, [[0.5, 3.0]] * 2)
        x = np.array([0.3, 0.7])
        assert gmm_log_density(double, x) == pytest.approx(gmm_log_density(single, x), abs=1e-12)

    def test_random_mixtures_match_linear_domain_sum(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            g = oracles.random_gmm(rng, dim=2, n_mix=3)
            x = rng.normal(0, 2, size=2)
            expected = math.log(oracles.mixture_pdf(g, x))
            assert gmm_log_density(g, x) == pytest.approx(expected, rel=1e-9)

    def test_far_tail_does_not_underflow(self):
        g = GaussianMixture([0.5, 0.5], [[0.0], [1.0]], [[1e-3], [1e-3]])
        val = gmm_log_density(g, [200.0])
        assert np.isfinite(val) and val < -1e6

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            gmm_log_density(unit_gmm(dim=2), [0.0, 1.0, 2.0])

    def test_rejects_bad_weights(self):
        with pytest.raises(ConfigError):
            GaussianMixture([0.7, 0.7], [[0.0], [1.0]], [[1.0], [1.0]])


class TestEm:
    def test_constant_samples_hit_the_floor(self):
        g = fit_gmm_em(np.full((40, 3), 2.5), 1)
        np.testing.assert_allclose(g.means, 2.5)
        np.testing.assert_array_equal(g.variances, VARIANCE_FLOOR)

    def test_two_clusters_recovered(self):
        rng = np.random.default_rng(0)
        x = np.concatenate([rng.normal(-5, 0.1, 200), rng.normal(5, 0.1, 200)])[:, None]
        g = fit_gmm_em(x, 2)
        means = np.sort(g.means[:, 0])
        assert abs(means[0] + 5) < 0.2 and abs(means[1] - 5) < 0.2

    def test_log_likelihood_never_decreases(self):
        rng = np.random.default_rng(5)
        x = np.concatenate([rng.normal(0, 1, (100, 2)), rng.normal(3, 0.5, (60, 2))])
        _, trace = fit_gmm_em(x, 3, iters=20, return_trace=True)
        assert len(trace) == 21
        assert np.all(np.diff(trace) >= -1e-9)

    def test_reproducible(self):
        x = np.random.default_rng(1).normal(size=(80, 2))
        a, b = fit_gmm_em(x, 2, seed=4), fit_gmm_em(x, 2, seed=4)
        assert np.array_equal(a.means, b.means) and np.array_equal(a.variances, b.variances)

    def test_too_few_samples(self):
        with pytest.raises(ConfigError):
            fit_gmm_em(np.zeros((2, 1)), 3)


class TestComposition:
    def test_single_phone_word_is_the_phone(self):
        ph = PhoneHmm("a", [unit_gmm(k) for k in range(3)], left_to_right_transitions(3))
        lex = Lexicon({"w": [["a"]]})
        h = compose_word_hmm(lex, {"a": ph}, "w")
        assert h.n_states == 3
        assert h.states == ph.states
        np.testing.assert_array_equal(h.transitions, ph.transitions)

    def test_two_phone_word_wires_exit_to_entry(self):
        a1 = np.array([[0.5, 0.5, 0, 0], [0, 0.7, 0.3, 0], [0, 0, 0.8, 0.2], [0, 0, 0, 1.0]])
        p1 = PhoneHmm("a", [unit_gmm(k) for k in range(3)], a1)
        p2 = PhoneHmm("b", [unit_gmm(k + 3) for k in range(3)], left_to_right_transitions(3, 0.6))
        h = compose_word_hmm(Lexicon({"ab": [["a", "b"]]}), {"a": p1, "b": p2}, "ab")
        assert h.n_states == 6
        assert h.transitions.shape == (7, 7)
        assert h.transitions[2, 3] == a1[2, 3]
        assert h.transitions[5, 6] == pytest.approx(0.4)
        np.testing.assert_allclose(h.transitions.sum(axis=1), 1.0)
        assert h.labels == (("a", 0), ("a", 1), ("a", 2), ("b", 0), ("b", 1), ("b", 2))

    def test_lookup_errors(self):
        ph = PhoneHmm("a", [unit_gmm()], left_to_right_transitions(1))
        lex = Lexicon({"w": [["a", "zz"]]})
        with pytest.raises(ModelLookupError):
            compose_word_hmm(lex, {"a": ph}, "missing")
        with pytest.raises(ModelLookupError):
            compose_word_hmm(lex, {"a": ph}, "w")

    def test_backward_transitions_rejected(self):
        bad = np.array([[0.5, 0.5, 0], [0.5, 0.0, 0.5], [0, 0, 1.0]])
        with pytest.raises(ConfigError):
            PhoneHmm("a", [unit_gmm(), unit_gmm()], bad)


class TestForward:
    def test_single_state_self_loop_is_sum_of_emissions(self):
        g = GaussianMixture([0.3, 0.7], [[0.0], [2.0]], [[1.0], [0.5]])
        h = WordHmm("w", [g], np.array([[1.0, 0.0], [0.0, 1.0]]))
        x = np.array([[0.1], [1.5], [-0.4], [2.2]])
        expected = sum(gmm_log_density(g, row) for row in x)
        assert forward_log_likelihood(h, x) == pytest.approx(expected, abs=1e-12)
        assert viterbi_align(h, x)[0] == pytest.approx(expected, abs=1e-12)

    def test_two_state_three_frames_matches_enumeration(self):
        a = np.array([[0.6, 0.3, 0.1], [0.0, 0.8, 0.2], [0.0, 0.0, 1.0]])
        h = WordHmm("w", [unit_gmm(0.0), unit_gmm(1.0)], a)
        x = np.array([[0.2], [0.9], [1.4]])
        assert forward_log_likelihood(h, x) == pytest.approx(oracles.total_path_log_likelihood(h, x), abs=1e-9)

    def test_random_models_match_enumeration(self):
        rng = np.random.default_rng(21)
        for _ in range(100):
            n = int(rng.integers(1, 4))
            h = WordHmm("w", [oracles.random_gmm(rng, 2, int(rng.integers(1, 3))) for _ in range(n)],
                        oracles.random_transitions(rng, n))
            x = rng.normal(0, 2, size=(int(rng.integers(1, 6)), 2))
            fwd = forward_log_likelihood(h, x)
            assert fwd == pytest.approx(oracles.total_path_log_likelihood(h, x), abs=1e-9)
            vit = viterbi_align(h, x)[0]
            assert vit == pytest.approx(oracles.best_path_log_likelihood(h, x), abs=1e-9)
            assert fwd >= vit

    def test_unreachable_end_is_minus_infinity(self):
        h = WordHmm("w", [unit_gmm()] * 3, left_to_right_transitions(3))
        assert forward_log_likelihood(h, np.zeros((2, 1))) == -math.inf

    def test_viterbi_path_is_monotone_and_valid(self):
        h = WordHmm("w", [unit_gmm(0), unit_gmm(5), unit_gmm(10)], left_to_right_transitions(3))
        x = np.array([[0.0], [0.1], [5.0], [4.9], [10.0]])
        score, path = viterbi_align(h, x)
        assert list(path) == [0, 0, 1, 1, 2]
        assert np.isfinite(score)

    def test_empty_features(self):
        h = WordHmm("w", [unit_gmm()], left_to_right_transitions(1))
        with pytest.raises(UndefinedLikelihoodError):
            forward_log_likelihood(h, np.zeros((0, 1)))
        with pytest.raises(UndefinedLikelihoodError):
            forward_log_likelihood(h, FeatureMatrix(np.zeros((0, 1)), 100.0))

    def test_dimension_mismatch(self):
        h = WordHmm("w", [unit_gmm()], left_to_right_transitions(1))
        with pytest.raises(ShapeError):
            forward_log_likelihood(h, np.zeros((3, 2)))


class TestBigram:
    def test_single_sentence(self):
        lm = train_bigram([["a", "b"]], vocab=["a", "b"])
        # V' = 2 words + end marker = 3; c(a, b) = 1, c(a) = 1.
        assert lm.prob("b", "a") == pytest.approx(2 / 4, abs=1e-15)
        assert lm.prob("a", "a") == pytest.approx(1 / 4, abs=1e-15)
        assert lm.prob("a", SENT_START) == pytest.approx(2 / 4, abs=1e-15)

    def test_conditionals_normalise(self):
        rng = np.random.default_rng(2)
        words = list("abcde")
        lm = train_bigram([list(rng.choice(words, size=int(rng.integers(1, 6)))) for _ in range(30)])
        for h in lm.histories:
            assert sum(lm.prob(w, h) for w in lm.targets) == pytest.approx(1.0, abs=1e-12)

    def test_uniform_corpus_is_near_uniform(self):
        words = ["a", "b", "c"]
        sents = [[x, y] for x in words for y in words]
        lm = train_bigram(sents)
        probs = [lm.prob(w, "a") for w in words]
        assert max(probs) - min(probs) < 1e-12

    def test_sequence_probability(self):
        lm = train_bigram([["a", "b"], ["b"]], vocab=["a", "b"])
        assert lm_log_prob(lm, []) == pytest.approx(lm.log_prob(SENT_END, SENT_START))
        assert lm_log_prob(lm, ["a"]) == pytest.approx(lm.log_prob("a", SENT_START) + lm.log_prob(SENT_END, "a"))
        chain = lm.log_prob("a", SENT_START) + lm.log_prob("b", "a") + lm.log_prob(SENT_END, "b")
        assert lm_log_prob(lm, ["a", "b"]) == pytest.approx(chain)

    def test_errors(self):
        with pytest.raises(ConfigError):
            train_bigram([])
        lm = train_bigram([["a"]])
        with pytest.raises(ModelLookupError):
            lm_log_prob(lm, ["zz"])

    def test_round_trip(self):
        lm = train_bigram([["a", "b", "a"], ["c"]])
        back = BigramLm.from_dict(lm.to_dict())
        np.testing.assert_array_equal(back.log_table, lm.log_table)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.lists(st.sampled_from("xyz"), min_size=1, max_size=5), min_size=1, max_size=8))
    def test_every_probability_in_unit_interval(self, corpus):
        lm = train_bigram(corpus)
        p = np.exp(lm.log_table)
        assert np.all(p > 0) and np.all(p < 1)


class TestBundle:
    def test_json_round_trip(self, tmp_path):
        bundle = oracles.random_bundle(np.random.default_rng(8), 4)
        bundle.save(tmp_path / "m.json")
        back = ModelBundle.load(tmp_path / "m.json")
        assert back.words == bundle.words
        x = np.random.default_rng(0).normal(size=(6, bundle.dim))
        for (w1, h1), (w2, h2) in zip(bundle.word_hmms(), back.word_hmms()):
            assert w1 == w2
            assert forward_log_likelihood(h1, x) == forward_log_likelihood(h2, x)

    def test_missing_phone_rejected(self):
        ph = PhoneHmm("a", [unit_gmm()], left_to_right_transitions(1))
        with pytest.raises(ModelLookupError):
            ModelBundle({"a": ph}, Lexicon({"w": [["b"]]}), train_bigram([["w"]]))

    def test_concatenation_of_word_models(self):
        ph = PhoneHmm("a", [unit_gmm()], left_to_right_transitions(1, 0.5))
        h = concatenate_hmms([ph, ph], "a a")
        assert h.transitions[0, 1] == 0.5 and h.transitions[1, 2] == 0.5

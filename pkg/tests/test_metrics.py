import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import min_edit_errors
from vowsn_asr.errors import UndefinedMetricError
from vowsn_asr.metrics import (
    EditAlignment,
    accuracy,
    align_words,
    normalize_transcript,
    score_transcripts,
    wer,
    wer_complement,
    write_metric_csv,
    xrt,
)

words = st.lists(st.sampled_from(["a", "b", "c", "d"]), max_size=5)


def counts(i, d, s, n):
    return EditAlignment(i, d, s, n)


class TestAlignment:
    def test_identical(self):
        a = align_words("a b c".split(), "a b c".split())
        assert (a.insertions, a.deletions, a.substitutions, a.ref_words) == (0, 0, 0, 3)

    def test_single_substitution(self):
        a = align_words("a b c".split(), "a x c".split())
        assert (a.insertions, a.deletions, a.substitutions, a.ref_words) == (0, 0, 1, 3)

    def test_degenerate(self):
        a = align_words(list("abcd"), [])
        assert (a.deletions, a.insertions, a.ref_words) == (4, 0, 4)
        b = align_words([], list("abcd"))
        assert (b.insertions, b.deletions, b.ref_words) == (4, 0, 0)

    def test_substitution_preferred_over_insert_delete_pair(self):
        a = align_words(["a"], ["b"])
        assert (a.substitutions, a.insertions, a.deletions) == (1, 0, 0)

    def test_pairs_reconstruct_both_sides(self):
        a = align_words("a b c d".split(), "a c d e".split())
        assert [r for r, _, _ in a.pairs if r is not None] == "a b c d".split()
        assert [h for _, h, _ in a.pairs if h is not None] == "a c d e".split()

    @given(words)
    def test_self_alignment_has_no_errors(self, x):
        assert align_words(x, x).errors == 0

    @given(words, words)
    def test_minimal_against_brute_force(self, ref, hyp):
        a = align_words(ref, hyp)
        assert a.errors == min_edit_errors(ref, hyp)
        assert a.insertions - a.deletions == len(hyp) - len(ref)
        assert a.ref_words == len(ref)

    @given(words, words)
    def test_error_count_symmetric(self, ref, hyp):
        assert align_words(ref, hyp).errors == align_words(hyp, ref).errors

    @given(st.lists(st.sampled_from("ab"), min_size=1, max_size=5), words)
    def test_wer_times_n_is_integer_error_count(self, ref, hyp):
        a = align_words(ref, hyp)
        assert wer(a) * len(ref) == pytest.approx(a.errors, abs=1e-12)


class TestRates:
    @pytest.mark.parametrize(
        "i,d,s,n,expected",
        [(10, 5, 15, 100, 0.30), (8, 6, 12, 100, 0.26), (5, 4, 8, 100, 0.17), (0, 0, 0, 7, 0.0)],
    )
    def test_wer(self, i, d, s, n, expected):
        assert wer(counts(i, d, s, n)) == expected

    def test_accuracy_and_complement(self):
        a = counts(10, 5, 15, 100)
        assert accuracy(a) == 0.80
        assert wer_complement(a) == 0.70
        perfect = counts(0, 0, 0, 12)
        assert accuracy(perfect) == 1.0 and wer_complement(perfect) == 1.0

    def test_wer_can_exceed_one(self):
        assert wer(align_words(["a"], list("bcd"))) == 3.0

    def test_undefined_for_empty_reference(self):
        for fn in (wer, accuracy, wer_complement):
            with pytest.raises(UndefinedMetricError):
                fn(counts(2, 0, 0, 0))

    @pytest.mark.parametrize("t,d,expected", [(3, 5, 0.6), (4, 5, 0.8), (1, 5, 0.2)])
    def test_xrt(self, t, d, expected):
        assert xrt(t, d) == expected

    @given(st.floats(1e-3, 1e4))
    def test_xrt_scale_free(self, t):
        assert xrt(0.4 * t, t) == pytest.approx(0.4, rel=1e-12)

    def test_xrt_errors(self):
        with pytest.raises(UndefinedMetricError):
            xrt(1.0, 0.0)
        with pytest.raises(ValueError):
            xrt(-1.0, 2.0)


class TestScoring:
    def test_normalisation(self):
        assert normalize_transcript("  Alpha  BRAVO\tcharlie ") == ["alpha", "bravo", "charlie"]

    def test_corpus_totals_and_csv(self):
        refs = [["a", "b"], ["c"]]
        hyps = [["a", "x"], []]
        per, total = score_transcripts(refs, hyps)
        assert (total.substitutions, total.deletions, total.ref_words) == (1, 1, 3)
        buf = io.StringIO()
        write_metric_csv(buf, per, total)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "utterance,I,D,S,N,WER,accuracy_eq7,wer_complement"
        assert lines[-1].startswith("corpus,0,1,1,3,")
        assert len(lines) == 4

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            score_transcripts([["a"]], [])

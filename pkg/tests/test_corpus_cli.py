import csv
import json
from pathlib import Path

import numpy as np
import pytest

from vowsn_asr import cli
from vowsn_asr.corpus import (
    SyntheticCorpusSpec,
    ToneSynth,
    default_vocab,
    generate_corpus,
    load_corpus,
    make_generator_bundle,
    save_corpus,
    synthesize_audio_corpus,
)
from vowsn_asr.decoder import viterbi_decode
from vowsn_asr.errors import ConfigError, ModelLookupError
from vowsn_asr.frontend import AudioClip, write_wav
from vowsn_asr.metrics import score_transcripts, wer

REPO = Path(__file__).resolve().parents[1]


def small_spec(n=20, noise=0.0, seed=0, lo=1, hi=3):
    return SyntheticCorpusSpec(default_vocab(6, seed=1), n, (lo, hi), noise, seed=seed)


class TestGeneration:
    def test_word_counts_in_range(self):
        spec = small_spec(100, lo=2, hi=4)
        utts = generate_corpus(spec, make_generator_bundle(spec.lexicon, seed=2))
        assert all(2 <= len(u.transcript) <= 4 for u in utts)
        assert {len(u.transcript) for u in utts} == {2, 3, 4}

    def test_fixed_seed_is_bit_identical(self):
        spec = small_spec(10, noise=0.5)
        gen = make_generator_bundle(spec.lexicon, seed=2)
        a, b = generate_corpus(spec, gen), generate_corpus(spec, gen)
        assert [u.transcript for u in a] == [u.transcript for u in b]
        assert all(np.array_equal(x.features.vectors, y.features.vectors) for x, y in zip(a, b))

    def test_noise_free_single_words_decode_perfectly(self):
        spec = small_spec(30, lo=1, hi=1)
        gen = make_generator_bundle(spec.lexicon, seed=5)
        utts = generate_corpus(spec, gen)
        hyps = [viterbi_decode(u.features, gen).words for u in utts]
        _, total = score_transcripts([u.transcript for u in utts], hyps)
        assert wer(total) == 0.0

    def test_unknown_word_rejected(self):
        spec = small_spec(3)
        gen = make_generator_bundle(spec.lexicon, seed=0)
        other = SyntheticCorpusSpec({"zulu": [["q"]]}, 3)
        with pytest.raises(ModelLookupError):
            generate_corpus(other, gen)

    def test_first_phones_are_unique(self):
        vocab = default_vocab(12, seed=3)
        firsts = [prons[0][0] for prons in vocab.values()]
        assert len(set(firsts)) == len(firsts)

    def test_audio_is_deterministic_and_padded(self):
        spec = small_spec(5, noise=0.01)
        synth = ToneSynth.for_lexicon(spec.lexicon, seed=3)
        a = synthesize_audio_corpus(spec, synth)
        b = synthesize_audio_corpus(spec, synth)
        assert all(np.array_equal(x.audio.samples, y.audio.samples) for x, y in zip(a, b))
        lead = int(0.1 * 8000)
        assert np.abs(a[0].audio.samples[: lead]).max() < 0.1 * np.abs(a[0].audio.samples).max()

    def test_bad_spec(self):
        with pytest.raises(ConfigError):
            SyntheticCorpusSpec({"a": [["x"]]}, 0)
        with pytest.raises(ConfigError):
            SyntheticCorpusSpec({"a": [["x"]]}, 5, (3, 1))

    def test_save_load_round_trip(self, tmp_path):
        spec = small_spec(4)
        utts = generate_corpus(spec, make_generator_bundle(spec.lexicon))
        save_corpus(tmp_path / "c", utts, spec.lexicon)
        back, lex, doc = load_corpus(tmp_path / "c")
        assert doc["kind"] == "features"
        assert lex.words == spec.lexicon.words
        assert [u.transcript for u in back] == [u.transcript for u in utts]
        assert all(np.array_equal(x.features.vectors, y.features.vectors) for x, y in zip(back, utts))


def run(argv, capsys=None):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr() if capsys else None
    return code, out


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """Small feature corpus and models trained from it through the CLI."""
    d = tmp_path_factory.mktemp("cli")
    (d / "gen.json").write_text(json.dumps({"kind": "features", "n_words": 5, "utterance_count": 60}))
    assert cli.main(["gen-corpus", "--config", str(d / "gen.json"), "--out", str(d / "corpus")]) == 0
    assert cli.main(["train", str(d / "corpus"), "--out", str(d / "model.json")]) == 0
    return d


class TestCli:
    def test_train_decode_score(self, trained, capsys):
        d = trained
        code, _ = run(["decode", d / "corpus", "--models", d / "model.json", "--out", d / "hyp.jsonl"], capsys)
        assert code == 0
        hyps = [json.loads(line)["text"] for line in (d / "hyp.jsonl").read_text().splitlines()]
        (d / "hyp.txt").write_text("".join(h + "\n" for h in hyps))
        code, _ = run(["score", d / "corpus" / "transcripts.txt", d / "hyp.txt", "--out", d / "m.csv"], capsys)
        assert code == 0
        rows = list(csv.DictReader(open(d / "m.csv")))
        assert rows[-1]["utterance"] == "corpus"
        assert float(rows[-1]["WER"]) < 0.05

    def test_decode_twice_identical(self, trained, capsys):
        d = trained
        args = ["decode", d / "corpus" / "feats" / "utt0000.csv", "--models", d / "model.json"]
        _, first = run(args, capsys)
        _, second = run(args, capsys)
        assert first.out == second.out and first.out

    def test_score_identical_files(self, tmp_path, capsys):
        (tmp_path / "r.txt").write_text("alpha bravo\nCharlie\n")
        (tmp_path / "h.txt").write_text("ALPHA  bravo\ncharlie\n")
        code, out = run(["score", tmp_path / "r.txt", tmp_path / "h.txt"], capsys)
        assert code == 0
        assert out.out.splitlines()[-1].startswith("corpus,0,0,0,3,0.0,")

    def test_score_json(self, tmp_path, capsys):
        (tmp_path / "r.txt").write_text("a b c d\n")
        (tmp_path / "h.txt").write_text("a x c\n")
        code, out = run(["score", tmp_path / "r.txt", tmp_path / "h.txt", "--format", "json"], capsys)
        assert code == 0
        assert json.loads(out.out) == {"I": 0, "D": 1, "S": 1, "N": 4, "WER": 0.5}

    def test_simulate_fixture_matches_table(self, tmp_path, capsys):
        code, out = run(["simulate", "--config", REPO / "manifests" / "reference.json", "--out", tmp_path], capsys)
        assert code == 0
        md = (tmp_path / "comparison.md").read_text()
        assert "| WER (%) | (I + D + S) / N | 30% | 26% | 17% |" in md
        assert "| Speed (xRT) | recognition time / speech duration | 0.6 | 0.8 | 0.2 |" in md
        assert "| Accuracy (%) | 1 - WER | 70% | 74% | 83% |" in md
        assert "| Power Consumption | mW (milliwatts) | 15 | 30 | 75 |" in md
        assert (tmp_path / "runs.csv").exists()

    def test_report_rebuilds_table(self, tmp_path, capsys):
        run(["simulate", "--config", REPO / "manifests" / "reference.json", "--out", tmp_path], capsys)
        code, out = run(["report", tmp_path / "runs.csv"], capsys)
        assert code == 0
        assert out.out == (tmp_path / "comparison.md").read_text()

    def test_extract(self, tmp_path, capsys):
        t = np.arange(8000) / 8000
        write_wav(tmp_path / "a.wav", AudioClip((8000 * np.sin(2 * np.pi * 440 * t)).astype(np.int16), 8000))
        code, out = run(["extract", tmp_path / "a.wav"], capsys)
        assert code == 0
        lines = out.out.splitlines()
        assert lines[0].split(",")[0] == "c0" and len(lines) == 99

    def test_gen_corpus_reproducible(self, tmp_path):
        for name in ("a", "b"):
            assert cli.main(["gen-corpus", "--seed", "4", "--out", str(tmp_path / name)]) == 0
        fa = sorted((tmp_path / "a" / "feats").iterdir())
        fb = sorted((tmp_path / "b" / "feats").iterdir())
        assert [p.read_bytes() for p in fa] == [p.read_bytes() for p in fb]

    def test_usage_errors_exit_two(self, tmp_path, capsys):
        assert run(["no-such-command"], capsys)[0] == 2
        assert run(["decode", tmp_path / "missing.csv", "--models", tmp_path / "m.json"], capsys)[0] == 2
        assert run(["simulate"], capsys)[0] == 2
        (tmp_path / "bad.json").write_text(json.dumps({"kind": "features", "bogus": 1}))
        code, out = run(["gen-corpus", "--config", tmp_path / "bad.json", "--out", tmp_path / "c"], capsys)
        assert code == 2 and "bogus" in out.err

    def test_bad_manifest_field_named(self, trained, tmp_path, capsys):
        m = {"format_version": 1, "scenarios": [{
            "name": "x", "corpus": str(trained / "corpus"), "models": str(trained / "model.json"),
            "channel": {"packet_loss": 0.1}}]}
        (tmp_path / "m.json").write_text(json.dumps(m))
        code, out = run(["simulate", "--config", tmp_path / "m.json", "--out", tmp_path], capsys)
        assert code == 2 and "packet_loss" in out.err

    def test_invalid_bundle_is_a_usage_error(self, tmp_path, capsys):
        (tmp_path / "m.json").write_text("{\"not\": \"a bundle\"}")
        (tmp_path / "f.csv").write_text("c0\n1.0\n")
        code, _ = run(["decode", tmp_path / "f.csv", "--models", tmp_path / "m.json"], capsys)
        assert code == 2

    def test_runtime_failure_exits_one(self, trained, tmp_path, capsys):
        # One-column features against four-dimensional models.
        (tmp_path / "f.csv").write_text("c0\n1.0\n2.0\n")
        code, out = run(["decode", tmp_path / "f.csv", "--models", trained / "model.json"], capsys)
        assert code == 1 and "dimension" in out.err

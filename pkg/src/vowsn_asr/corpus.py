"""Synthetic corpora: feature sequences sampled from a GMM-HMM bundle, or
tone-synthesized audio, each with ground-truth transcripts."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ModelLookupError
from .frontend import (
    AudioClip,
    FeatureMatrix,
    FrontendConfig,
    mfcc,
    preprocess,
    read_features_csv,
    read_wav,
    write_features_csv,
    write_wav,
)
from .models import (
    GaussianMixture,
    Lexicon,
    ModelBundle,
    PhoneHmm,
    compose_word_hmm,
    left_to_right_transitions,
    train_bigram,
)

CORPUS_SCHEMA = "vowsn-asr-corpus/1"

NATO = ["alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet",
        "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango",
        "uniform", "victor", "whiskey", "xray", "yankee", "zulu"]


@dataclass
class SyntheticCorpusSpec:
    vocab: dict
    utterance_count: int
    words_per_utterance: tuple = (1, 3)
    sample_noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.vocab:
            raise ConfigError("vocab", "must not be empty")
        self.vocab = {w: [list(p) for p in prons] for w, prons in self.vocab.items()}
        if self.utterance_count < 1:
            raise ConfigError("utterance_count", "must be positive")
        lo, hi = self.words_per_utterance
        if not 1 <= lo <= hi:
            raise ConfigError("words_per_utterance", "needs 1 <= min <= max")
        self.words_per_utterance = (int(lo), int(hi))
        if self.sample_noise_sigma < 0:
            raise ConfigError("sample_noise_sigma", "must be non-negative")

    @property
    def lexicon(self) -> Lexicon:
        return Lexicon(self.vocab)


@dataclass
class Utterance:
    uid: str
    transcript: tuple
    features: FeatureMatrix | None = None
    audio: AudioClip | None = None
    state_labels: list = field(default_factory=list, repr=False)

    @property
    def text(self) -> str:
        return " ".join(self.transcript)


def default_vocab(n_words: int = 10, extra_phones: int = 2, max_extra: int = 1, seed: int = 0) -> dict:
    """Word -> [pronunciation]. Each word starts with a phone no other word
    starts with, so any phone string parses into words in one way only."""
    if not 1 <= n_words <= len(NATO):
        raise ConfigError("n_words", f"must lie in [1, {len(NATO)}]")
    rng = np.random.default_rng(seed)
    phones = [f"ph{i:02d}" for i in range(n_words + extra_phones)]
    vocab = {}
    for i, w in enumerate(NATO[:n_words]):
        tail = rng.choice(len(phones), size=rng.integers(0, max_extra + 1))
        vocab[w] = [[phones[i]] + [phones[k] for k in tail]]
    return vocab


def make_generator_bundle(lexicon: Lexicon, dim: int = 4, n_states: int = 3, n_mix: int = 1,
                          separation: float = 6.0, self_loop: float = 0.6, seed: int = 0) -> ModelBundle:
    """Random phone HMMs with unit-variance components whose means are
    spread ``separation`` standard deviations apart on average."""
    rng = np.random.default_rng(seed)
    phones = {}
    trans = left_to_right_transitions(n_states, self_loop)
    for ph in sorted(lexicon.phones()):
        states = []
        for _ in range(n_states):
            w = rng.dirichlet(np.full(n_mix, 5.0)) if n_mix > 1 else np.ones(1)
            states.append(GaussianMixture(w, rng.normal(0, separation, (n_mix, dim)), np.ones((n_mix, dim))))
        phones[ph] = PhoneHmm(ph, states, trans)
    lm = train_bigram([[w] for w in lexicon.words], vocab=lexicon.words)
    return ModelBundle(phones, lexicon, lm)


def _sample_words(rng, words, lo, hi):
    n = int(rng.integers(lo, hi + 1))
    return tuple(words[k] for k in rng.integers(0, len(words), size=n))


def generate_corpus(spec: SyntheticCorpusSpec, models: ModelBundle) -> list:
    """Sample utterances from the generative model: state paths from each
    word HMM's transitions, one emission per visited state per frame."""
    lex = spec.lexicon
    for w in lex.words:
        if w not in models.lexicon:
            raise ModelLookupError(f"word {w!r} is not in the model lexicon")
    hmms = {w: compose_word_hmm(models.lexicon, models.phones, w) for w in lex.words}
    rng = np.random.default_rng(spec.seed)
    out = []
    for k in range(spec.utterance_count):
        words = _sample_words(rng, lex.words, *spec.words_per_utterance)
        rows, labels = [], []
        for w in words:
            h = hmms[w]
            s = 0
            while s < h.n_states:
                g = h.states[s]
                m = rng.choice(g.n_components, p=g.weights) if g.n_components > 1 else 0
                z = rng.standard_normal(g.dim)
                rows.append(g.means[m] + spec.sample_noise_sigma * np.sqrt(g.variances[m]) * z)
                labels.append(h.labels[s])
                s = int(rng.choice(h.n_states + 1, p=h.transitions[s]))
        feats = FeatureMatrix(np.array(rows), 100.0, source_duration_s=len(rows) / 100.0)
        out.append(Utterance(f"utt{k:04d}", words, features=feats, state_labels=labels))
    return out


@dataclass(frozen=True)
class ToneSynth:
    """Each phone state is rendered as a two-tone chord for a random number
    of 10 ms frames (at least ``min_frames``)."""

    chords: dict
    sample_rate_hz: int = 8000
    amplitude: float = 8000.0
    min_frames: int = 4
    stay_prob: float = 0.6
    lead_silence_s: float = 0.1

    @classmethod
    def for_lexicon(cls, lexicon: Lexicon, n_states: int = 3, seed: int = 0, **kw) -> "ToneSynth":
        rng = np.random.default_rng(seed)
        sr = kw.get("sample_rate_hz", 8000)
        top = min(3400.0, 0.85 * sr / 2)
        grid = [(f1, f2) for f1 in np.linspace(200, 1000, 9) for f2 in np.linspace(1200, top, 12)]
        keys = [(ph, j) for ph in sorted(lexicon.phones()) for j in range(n_states)]
        if len(keys) > len(grid):
            raise ConfigError("phones", "too many phone states for the tone grid")
        pick = rng.permutation(len(grid))[: len(keys)]
        return cls({key: grid[i] for key, i in zip(keys, pick)}, **kw)

    def render(self, words, lexicon: Lexicon, rng, noise_sigma: float = 0.0) -> tuple:
        hop = self.sample_rate_hz // 100
        lead = np.zeros(int(self.lead_silence_s * self.sample_rate_hz))
        pieces, labels = [lead], []
        n_states = 1 + max(j for _, j in self.chords)
        for w in words:
            for ph in lexicon[w][0]:
                for j in range(n_states):
                    n_fr = self.min_frames + int(rng.geometric(1 - self.stay_prob)) - 1
                    t = np.arange(n_fr * hop) / self.sample_rate_hz
                    f1, f2 = self.chords[(ph, j)]
                    ph1, ph2 = rng.uniform(0, 2 * np.pi, 2)
                    pieces.append(self.amplitude * (np.sin(2 * np.pi * f1 * t + ph1) + 0.6 * np.sin(2 * np.pi * f2 * t + ph2)))
                    labels.extend([(ph, j)] * n_fr)
        pieces.append(lead)
        x = np.concatenate(pieces)
        if noise_sigma:
            x = x + noise_sigma * self.amplitude * rng.standard_normal(len(x))
        x = np.clip(np.round(x), -32768, 32767).astype(np.int16)
        return AudioClip(x, self.sample_rate_hz), labels


def synthesize_audio_corpus(spec: SyntheticCorpusSpec, synth: ToneSynth | None = None) -> list:
    lex = spec.lexicon
    synth = synth or ToneSynth.for_lexicon(lex, seed=spec.seed)
    rng = np.random.default_rng(spec.seed)
    out = []
    for k in range(spec.utterance_count):
        words = _sample_words(rng, lex.words, *spec.words_per_utterance)
        clip, labels = synth.render(words, lex, rng, spec.sample_noise_sigma)
        out.append(Utterance(f"utt{k:04d}", words, audio=clip, state_labels=labels))
    return out


def extract_corpus_features(utts, frontend: FrontendConfig | None = None, target_rate_hz=None,
                            trim_threshold: float | None = 0.01) -> list:
    """Features for every utterance, running the same pre-processing the
    recognizer applies (resample, edge trim, MFCC)."""
    frontend = frontend or FrontendConfig()
    out = []
    for u in utts:
        if u.features is not None and u.audio is None:
            out.append(u.features)
        else:
            out.append(mfcc(preprocess(u.audio, target_rate_hz, trim_threshold), frontend))
    return out


def save_corpus(directory, utts, lexicon: Lexicon, extra: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    kind = "audio" if utts and utts[0].audio is not None else "features"
    entries = []
    for u in utts:
        if kind == "audio":
            rel = f"wav/{u.uid}.wav"
            (d / "wav").mkdir(exist_ok=True)
            write_wav(d / rel, u.audio)
        else:
            rel = f"feats/{u.uid}.csv"
            (d / "feats").mkdir(exist_ok=True)
            write_features_csv(d / rel, u.features)
        entries.append({"id": u.uid, "path": rel, "transcript": u.text})
    doc = {
        "schema": CORPUS_SCHEMA,
        "kind": kind,
        "lexicon": {w: [list(p) for p in lexicon[w]] for w in lexicon.words},
        "utterances": entries,
        **(extra or {}),
    }
    (d / "corpus.json").write_text(json.dumps(doc, indent=1))
    (d / "transcripts.txt").write_text("".join(u.text + "\n" for u in utts))
    return d / "corpus.json"


def load_corpus(path) -> tuple:
    """Returns (utterances, lexicon, document) from a directory or its
    ``corpus.json``."""
    p = Path(path)
    if p.is_dir():
        p = p / "corpus.json"
    doc = json.loads(p.read_text())
    if doc.get("schema") != CORPUS_SCHEMA:
        raise ConfigError("schema", f"{p}: expected {CORPUS_SCHEMA!r}")
    utts = []
    for e in doc["utterances"]:
        f = p.parent / e["path"]
        words = tuple(e["transcript"].split())
        if doc["kind"] == "audio":
            utts.append(Utterance(e["id"], words, audio=read_wav(f)))
        else:
            utts.append(Utterance(e["id"], words, features=read_features_csv(f)))
    return utts, Lexicon(doc["lexicon"]), doc

"""Ready-made synthetic setups used by the demos and the test suite."""

from __future__ import annotations

from dataclasses import dataclass

from .corpus import (
    SyntheticCorpusSpec,
    ToneSynth,
    default_vocab,
    extract_corpus_features,
    synthesize_audio_corpus,
)
from .frontend import FrontendConfig
from .models import Lexicon, ModelBundle
from .training import train_models


@dataclass
class AudioSetup:
    lexicon: Lexicon
    train: list
    test: list
    models: ModelBundle


def make_audio_setup(n_words: int = 10, n_train: int = 100, n_test: int = 50, noise_sigma: float = 0.02,
                     words_per_utterance=(1, 3), sample_rate_hz: int = 8000, seed: int = 0,
                     n_mix: int = 2) -> AudioSetup:
    """Tone-synthesized train/test corpora sharing one phone inventory, and
    models trained on the training half."""
    vocab = default_vocab(n_words, seed=seed)
    lex = Lexicon(vocab)
    synth = ToneSynth.for_lexicon(lex, seed=seed + 1, sample_rate_hz=sample_rate_hz)
    train = synthesize_audio_corpus(
        SyntheticCorpusSpec(vocab, n_train, words_per_utterance, noise_sigma, seed=seed + 2), synth)
    test = synthesize_audio_corpus(
        SyntheticCorpusSpec(vocab, n_test, words_per_utterance, noise_sigma, seed=seed + 3), synth)
    frontend = FrontendConfig()
    feats = extract_corpus_features(train, frontend, sample_rate_hz)
    models = train_models(feats, [u.transcript for u in train], lex, n_mix=n_mix, seed=seed,
                          frontend=frontend, sample_rate_hz=sample_rate_hz)
    return AudioSetup(lex, train, test, models)

"""Toy-scale acoustic model training from transcribed feature sequences.

Segmental k-means: frames are first split uniformly across the states of
each utterance's transcript, a GMM is fitted per phone state, then the
utterances are re-aligned with Viterbi against the new models and the
GMMs refitted. Transition probabilities stay at their fixed defaults.
"""

from __future__ import annotations

import logging

import numpy as np

from .frontend import FeatureMatrix
from .models import (
    VARIANCE_FLOOR,
    GaussianMixture,
    Lexicon,
    ModelBundle,
    PhoneHmm,
    concatenate_hmms,
    fit_gmm_em,
    left_to_right_transitions,
    train_bigram,
    viterbi_align,
)

log = logging.getLogger(__name__)


def _state_sequence(words, lexicon, n_states):
    return [(ph, j) for w in words for ph in lexicon[w][0] for j in range(n_states)]


def _fit_states(frames, keys, n_mix, em_iters, seed, variance_floor, fallback):
    states = {}
    for idx, key in enumerate(keys):
        x = frames.get(key)
        if x is None or len(x) == 0:
            mean, var = fallback
            states[key] = GaussianMixture([1.0], mean[None, :], var[None, :])
            continue
        x = np.vstack(x)
        m = max(1, min(n_mix, len(x)))
        states[key] = fit_gmm_em(x, m, iters=em_iters, seed=seed + idx, variance_floor=variance_floor)
    return states


def train_models(features, transcripts, lexicon: Lexicon, n_states: int = 3, n_mix: int = 1,
                 realign_iters: int = 4, em_iters: int = 10, seed: int = 0, self_loop: float = 0.6,
                 variance_floor: float = VARIANCE_FLOOR, frontend=None, sample_rate_hz=None) -> ModelBundle:
    """Estimate phone HMM emissions and a bigram LM from a transcribed corpus."""
    xs = [f.vectors if isinstance(f, FeatureMatrix) else np.asarray(f, dtype=float) for f in features]
    transcripts = [list(t) for t in transcripts]
    phones = sorted(lexicon.phones())
    keys = [(ph, j) for ph in phones for j in range(n_states)]
    everything = np.vstack([x for x in xs if len(x)])
    fallback = (everything.mean(axis=0), np.maximum(everything.var(axis=0), variance_floor))
    trans = left_to_right_transitions(n_states, self_loop)

    frames = {}
    for x, words in zip(xs, transcripts):
        seq = _state_sequence(words, lexicon, n_states)
        if len(x) < len(seq):
            continue
        bounds = (np.arange(len(x)) * len(seq)) // len(x)
        for t, s in enumerate(bounds):
            frames.setdefault(seq[s], []).append(x[t])

    for it in range(realign_iters + 1):
        states = _fit_states(frames, keys, n_mix, em_iters, seed, variance_floor, fallback)
        models = {ph: PhoneHmm(ph, [states[(ph, j)] for j in range(n_states)], trans) for ph in phones}
        if it == realign_iters:
            break
        frames = {}
        total = 0.0
        for x, words in zip(xs, transcripts):
            h = concatenate_hmms([models[ph] for w in words for ph in lexicon[w][0]], " ".join(words))
            if len(x) < h.n_states:
                continue
            score, path = viterbi_align(h, x)
            if not np.isfinite(score):
                continue
            total += score
            for t, s in enumerate(path):
                frames.setdefault(h.labels[s], []).append(x[t])
        log.debug("realignment pass %d: total log-likelihood %.3f", it + 1, total)

    lm = train_bigram(transcripts, vocab=lexicon.words)
    return ModelBundle(models, lexicon, lm, frontend=frontend, sample_rate_hz=sample_rate_hz)

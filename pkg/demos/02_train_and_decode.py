"""
Train a small GMM-HMM recognizer on sampled feature sequences and decode a
held-out set, then look at what the beam width buys.
"""

import time

from vowsn_asr.corpus import SyntheticCorpusSpec, default_vocab, generate_corpus, make_generator_bundle
from vowsn_asr.decoder import DecodeConfig, SearchGraph, viterbi_decode
from vowsn_asr.metrics import score_transcripts, wer
from vowsn_asr.training import train_models

## Vocabulary: ten words, each starting with its own phone
vocab = default_vocab(10, seed=0)
for word, prons in list(vocab.items())[:3]:
    print(f"{word:>8}: {' '.join(prons[0])}")

## Sample training and test utterances from a random "true" model
train_spec = SyntheticCorpusSpec(vocab, 200, (1, 3), sample_noise_sigma=0.8, seed=0)
test_spec = SyntheticCorpusSpec(vocab, 60, (1, 3), sample_noise_sigma=0.8, seed=1)
truth = make_generator_bundle(train_spec.lexicon, dim=4, separation=4.0, seed=3)
train = generate_corpus(train_spec, truth)
test = generate_corpus(test_spec, truth)
print(f"{len(train)} training utterances, e.g. {train[0].text!r} ({train[0].features.n_frames} frames)")

## Segmental k-means training: uniform split, then Viterbi re-alignment
t0 = time.perf_counter()
models = train_models([u.features for u in train], [u.transcript for u in train], train_spec.lexicon, n_mix=2)
print(f"trained {len(models.phones)} phone models in {time.perf_counter() - t0:.1f} s")

## Decode the test set at several beam widths
graph = SearchGraph(models)
refs = [u.transcript for u in test]
for beam in (float("inf"), 40.0, 15.0, 5.0):
    cfg = DecodeConfig(beam_logwidth=beam)
    results = [viterbi_decode(u.features, models, cfg, graph=graph) for u in test]
    _, total = score_transcripts(refs, [r.words for r in results])
    pruned = sum(r.pruned_state_fraction for r in results) / len(results)
    updates = sum(r.state_updates for r in results)
    print(f"beam={beam:>5}: WER={wer(total):.3f}  pruned={pruned:.2f}  state updates={updates}")

## One utterance in detail
r = viterbi_decode(test[0].features, models)
print(f"reference: {test[0].text!r}\nhypothesis: {' '.join(r.words)!r}  log score {r.log_score:.1f}")

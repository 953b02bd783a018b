"""Time-synchronous Viterbi beam search over a flat vocabulary of word HMMs.

Score of a hypothesis W over observations O::

    best-path log P(O | W) + lm_scale * log P(W) + word_insertion_penalty * |W|

P(W) includes the sentence-start and sentence-end bigrams. Inter-word
transitions pay the finishing word's exit probability; the final word must
sit in its last state on the last frame.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyInputError, SearchSpaceError, ShapeError
from .frontend import FeatureMatrix
from .models import (
    SENT_END,
    SENT_START,
    ModelBundle,
    best_path_log_likelihood,
    concatenate_hmms,
    lm_log_prob,
)

ORACLE_LIMIT = 10**5


@dataclass(frozen=True)
class DecodeConfig:
    beam_logwidth: float = math.inf
    lm_scale: float = 1.0
    word_insertion_penalty: float = 0.0
    max_words: int | None = None

    def __post_init__(self):
        if not self.beam_logwidth >= 0:
            raise ConfigError("beam_logwidth", "must be non-negative")
        if not self.lm_scale >= 0:
            raise ConfigError("lm_scale", "must be non-negative")
        if not math.isfinite(self.word_insertion_penalty):
            raise ConfigError("word_insertion_penalty", "must be finite")
        if self.max_words is not None and self.max_words < 1:
            raise ConfigError("max_words", "must be at least 1")


@dataclass
class DecodeResult:
    words: tuple
    log_score: float
    frames_processed: int
    decode_wall_time_s: float = 0.0
    pruned_state_fraction: float = 0.0
    state_updates: int = 0

    def to_dict(self) -> dict:
        return {
            "words": list(self.words),
            "text": " ".join(self.words),
            "log_score": self.log_score,
            "frames_processed": self.frames_processed,
            "decode_wall_time_s": self.decode_wall_time_s,
            "pruned_state_fraction": self.pruned_state_fraction,
            "state_updates": self.state_updates,
        }


class SearchGraph:
    """Flattened state space of every word pronunciation in a bundle."""

    def __init__(self, models: ModelBundle, lm_scale=1.0, word_insertion_penalty=0.0):
        self.models = models
        self.instances = models.word_hmms()
        self.words = [w for w, _ in self.instances]
        k = len(self.instances)

        gmms, gmm_ids = [], {}
        state_gmm, state_inst, entry, last = [], [], [], []
        preds = []  # per global state: list of (src, log p)
        exits = []  # (state, instance, log p)
        offset = 0
        for v, (_, h) in enumerate(self.instances):
            n = h.n_states
            entry.append(offset)
            last.append(offset + n - 1)
            for j, g in enumerate(h.states):
                if id(g) not in gmm_ids:
                    gmm_ids[id(g)] = len(gmms)
                    gmms.append(g)
                state_gmm.append(gmm_ids[id(g)])
                state_inst.append(v)
                preds.append([(offset + i, math.log(h.transitions[i, j]))
                              for i in range(n) if h.transitions[i, j] > 0])
                if h.transitions[j, n] > 0:
                    exits.append((offset + j, v, math.log(h.transitions[j, n])))
            offset += n

        self.n_states = offset
        self.gmms = gmms
        self.state_gmm = np.array(state_gmm)
        self.state_inst = np.array(state_inst)
        self.entry = np.array(entry)
        self.last = np.array(last)
        width = max(1, max(len(p) for p in preds))
        self.pred_idx = np.zeros((offset, width), dtype=int)
        self.pred_logp = np.full((offset, width), -np.inf)
        for j, p in enumerate(preds):
            for c, (i, lp) in enumerate(p):
                self.pred_idx[j, c] = i
                self.pred_logp[j, c] = lp
        self.exit_state = np.array([e[0] for e in exits], dtype=int)
        self.exit_inst = np.array([e[1] for e in exits], dtype=int)
        self.exit_logp = np.array([e[2] for e in exits])

        lm = models.lm
        self.lm_start = np.array([lm_scale * lm.log_prob(w, SENT_START) + word_insertion_penalty for w in self.words])
        self.lm_end = np.array([lm_scale * lm.log_prob(SENT_END, w) for w in self.words])
        self.lm_trans = np.array([[lm_scale * lm.log_prob(w2, w1) + word_insertion_penalty for w2 in self.words]
                                  for w1 in self.words]).reshape(k, k)

    def emission_scores(self, x: np.ndarray) -> np.ndarray:
        """(T, N) emission log densities for every graph state."""
        per_gmm = np.column_stack([g.log_density(x) for g in self.gmms])
        return per_gmm[:, self.state_gmm]


def viterbi_search(emissions: np.ndarray, graph: SearchGraph, cfg: DecodeConfig) -> DecodeResult:
    """Beam search over precomputed (T, N) emission scores."""
    t_len, n = emissions.shape
    if t_len == 0:
        raise EmptyInputError("cannot decode an empty feature matrix")
    layered = cfg.max_words is not None
    n_layers = cfg.max_words if layered else 1
    beam = cfg.beam_logwidth
    k = len(graph.words)

    delta = np.full((n_layers, n), -np.inf)
    delta[0, graph.entry] = graph.lm_start + emissions[0, graph.entry]
    back = np.zeros((t_len, n_layers, n), dtype=np.int64)
    newword = np.zeros((t_len, n_layers, n), dtype=bool)
    layer_base = (np.arange(n_layers) * n)[:, None]

    sweeps = 1
    active_total = int(np.isfinite(delta).sum())
    reached_total = active_total
    pruned_total = 0
    lm_exit = graph.lm_trans[graph.exit_inst]  # (E, K)

    for t in range(1, t_len):
        sweeps += 1
        cand = delta[:, graph.pred_idx] + graph.pred_logp[None]  # (L, N, W)
        best_c = cand.argmax(axis=2)
        new = np.take_along_axis(cand, best_c[..., None], axis=2)[..., 0]
        back[t] = layer_base + np.take_along_axis(
            np.broadcast_to(graph.pred_idx, cand.shape), best_c[..., None], axis=2)[..., 0]

        if len(graph.exit_state):
            ends = delta[:, graph.exit_state] + graph.exit_logp  # (L, E)
            src_layers = n_layers - 1 if layered else 1
            for l_src in range(src_layers):
                l_dst = l_src + 1 if layered else l_src
                into = ends[l_src][:, None] + lm_exit  # (E, K)
                arg = into.argmax(axis=0)
                score = into[arg, np.arange(k)]
                dst = graph.entry
                better = score > new[l_dst, dst]
                if np.any(better):
                    d = dst[better]
                    new[l_dst, d] = score[better]
                    back[t, l_dst, d] = l_src * n + graph.exit_state[arg[better]]
                    newword[t, l_dst, d] = True

        new = new + emissions[t][None, :]
        reached = np.isfinite(new)
        if math.isfinite(beam):
            top = new.max()
            if np.isfinite(top):
                prune = reached & (new < top - beam)
                pruned_total += int(prune.sum())
                new[prune] = -np.inf
        reached_total += int(reached.sum())
        delta = new
        active_total += int(np.isfinite(delta).sum())

    final = delta[:, graph.last] + graph.lm_end[None, :]  # (L, K)
    best = final.max()
    if not np.isfinite(best):
        return DecodeResult((), -math.inf, sweeps, 0.0, _frac(pruned_total, reached_total), active_total)
    candidates = []
    for l_end, v in zip(*np.nonzero(final == best)):
        candidates.append(_backtrace(back, newword, graph, int(l_end) * n + int(graph.last[v]), n))
    return DecodeResult(
        words=min(candidates),
        log_score=float(best),
        frames_processed=sweeps,
        pruned_state_fraction=_frac(pruned_total, reached_total),
        state_updates=active_total,
    )


def _frac(a, b):
    return a / b if b else 0.0


def _backtrace(back, newword, graph, flat, n):
    t_len = back.shape[0]
    words = [graph.words[graph.state_inst[flat % n]]]
    for t in range(t_len - 1, 0, -1):
        layer, state = divmod(flat, n)
        prev = int(back[t, layer, state])
        if newword[t, layer, state]:
            words.append(graph.words[graph.state_inst[prev % n]])
        flat = prev
    return tuple(reversed(words))


def _features(feats, models: ModelBundle) -> np.ndarray:
    x = feats.vectors if isinstance(feats, FeatureMatrix) else np.atleast_2d(np.asarray(feats, dtype=float))
    if x.shape[0] == 0:
        raise EmptyInputError("cannot decode an empty feature matrix")
    if x.shape[1] != models.dim:
        raise ShapeError(f"feature dimension {x.shape[1]} != model dimension {models.dim}")
    return x


def viterbi_decode(feats, models: ModelBundle, cfg: DecodeConfig | None = None,
                   graph: SearchGraph | None = None) -> DecodeResult:
    """Most likely word sequence for ``feats``.

    ``graph`` may be passed to reuse a prebuilt search graph across
    utterances; it must have been built with the same lm_scale and penalty.
    """
    cfg = cfg or DecodeConfig()
    x = _features(feats, models)
    start = time.perf_counter()
    if graph is None:
        graph = SearchGraph(models, cfg.lm_scale, cfg.word_insertion_penalty)
    result = viterbi_search(graph.emission_scores(x), graph, cfg)
    result.decode_wall_time_s = time.perf_counter() - start
    return result


def score_sequence(words, feats, models: ModelBundle, cfg: DecodeConfig | None = None) -> float:
    """Combined score of one word sequence (best over its pronunciations)."""
    cfg = cfg or DecodeConfig()
    x = _features(feats, models)
    hmms = {}
    for w, h in models.word_hmms():
        hmms.setdefault(w, []).append(h)
    best = -math.inf
    for combo in itertools.product(*(hmms[w] for w in words)):
        best = max(best, best_path_log_likelihood(concatenate_hmms(combo, " ".join(words)), x))
    return best + cfg.lm_scale * lm_log_prob(models.lm, words) + cfg.word_insertion_penalty * len(words)


def exhaustive_decode(feats, models: ModelBundle, max_words: int, cfg: DecodeConfig | None = None) -> DecodeResult:
    """Score every word sequence of 1..max_words words; return the best.

    Test oracle only. Ties go to the lexicographically smallest sequence.
    """
    cfg = cfg or DecodeConfig()
    x = _features(feats, models)
    vocab = models.words
    space = sum(len(vocab) ** k for k in range(1, max_words + 1))
    if space > ORACLE_LIMIT:
        raise SearchSpaceError(f"{space} hypotheses exceed the oracle limit of {ORACLE_LIMIT}")
    start = time.perf_counter()
    best_words, best_score = (), -math.inf
    for k in range(1, max_words + 1):
        for seq in itertools.product(vocab, repeat=k):
            s = score_sequence(seq, x, models, cfg)
            if s > best_score or (s == best_score and s > -math.inf and seq < best_words):
                best_words, best_score = seq, s
    return DecodeResult(best_words, best_score, len(x), time.perf_counter() - start)

"""GMM-HMM acoustic model, phonetic dictionary and bigram language model.

HMM conventions used throughout:

* states ``0..n-1`` emit; index ``n`` is a non-emitting exit pseudo-state
  whose row is absorbing;
* a path enters at state 0 on the first frame;
* a word (or word sequence) scores the paths that sit in its last emitting
  state on the final frame. The exit transition is only paid when control
  passes to a following word.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigError, ModelLookupError, ShapeError, UndefinedLikelihoodError
from .frontend import FeatureMatrix, FrontendConfig

VARIANCE_FLOOR = 1e-4
SENT_START = "<s>"
SENT_END = "</s>"
BUNDLE_SCHEMA = "vowsn-asr-bundle/1"

_LOG_2PI = np.log(2.0 * np.pi)


def _log(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Diagonal-covariance Gaussian mixture: weights (M,), means and
    variances (M, D)."""

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.atleast_2d(np.asarray(self.means, dtype=float))
        var = np.atleast_2d(np.asarray(self.variances, dtype=float))
        if mu.shape != var.shape or mu.shape[0] != w.shape[0]:
            raise ShapeError(f"inconsistent mixture shapes {w.shape}, {mu.shape}, {var.shape}")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigError("weights", "must be non-negative and sum to 1")
        if np.any(var <= 0):
            raise ConfigError("variances", "must be positive")
        for name, val in (("weights", w), ("means", mu), ("variances", var)):
            object.__setattr__(self, name, val)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_densities(self, x: np.ndarray) -> np.ndarray:
        """(T, M) array of log b_m + log N(x_t; mu_m, diag var_m)."""
        x = np.atleast_2d(x)
        if x.shape[1] != self.dim:
            raise ShapeError(f"observation dimension {x.shape[1]} != model dimension {self.dim}")
        const = -0.5 * (self.dim * _LOG_2PI + np.log(self.variances).sum(axis=1))
        diff = x[:, None, :] - self.means[None, :, :]
        quad = -0.5 * (diff**2 / self.variances[None, :, :]).sum(axis=2)
        return _log(self.weights)[None, :] + const[None, :] + quad

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Log density for each row of ``x`` (shape (T,))."""
        return logsumexp(self.component_log_densities(x), axis=1)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(), "variances": self.variances.tolist()}

    @classmethod
    def from_dict(cls, d) -> "GaussianMixture":
        return cls(np.array(d["weights"]), np.array(d["means"]), np.array(d["variances"]))


def gmm_log_density(g: GaussianMixture, x) -> float:
    """log sum_m b_m N(x; mu_m, diag(var_m)) for a single D-vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != g.dim:
        raise ShapeError(f"expected a vector of length {g.dim}, got shape {x.shape}")
    return float(g.log_density(x[None, :])[0])


def _kmeans(x, m, rng, n_iter=10):
    centers = x[rng.choice(len(x), size=m, replace=False)].copy()
    labels = np.zeros(len(x), dtype=int)
    for _ in range(n_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        for k in range(m):
            members = x[labels == k]
            if len(members):
                centers[k] = members.mean(axis=0)
    return centers, labels


def fit_gmm_em(samples, n_components: int, iters: int = 20, seed: int = 0,
               variance_floor: float = VARIANCE_FLOOR, return_trace: bool = False):
    """Maximum-likelihood mixture by EM with k-means initialisation.

    With ``return_trace`` also returns the total log-likelihood of the
    initial model and after every M-step (``iters + 1`` values).
    """
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    n, d = x.shape
    if n_components < 1:
        raise ConfigError("n_components", "must be at least 1")
    if n < n_components:
        raise ConfigError("n_components", f"{n} samples cannot support {n_components} components")
    rng = np.random.default_rng(seed)
    centers, labels = _kmeans(x, n_components, rng)
    weights = np.empty(n_components)
    means = centers
    variances = np.empty((n_components, d))
    for k in range(n_components):
        members = x[labels == k]
        weights[k] = len(members) / n
        variances[k] = members.var(axis=0) if len(members) else x.var(axis=0)
    variances = np.maximum(variances, variance_floor)
    if weights.sum() <= 0:
        weights[:] = 1.0 / n_components
    weights = weights / weights.sum()

    trace = []
    for it in range(iters + 1):
        comp = GaussianMixture(weights, means, variances).component_log_densities(x)
        total = logsumexp(comp, axis=1)
        trace.append(float(total.sum()))
        if it == iters:
            break
        resp = np.exp(comp - total[:, None])
        nk = resp.sum(axis=0)
        new_means = means.copy()
        new_vars = variances.copy()
        live = nk > 1e-12
        new_means[live] = (resp[:, live].T @ x) / nk[live, None]
        for k in np.flatnonzero(live):
            diff = x - new_means[k]
            new_vars[k] = (resp[:, k] @ diff**2) / nk[k]
        weights = nk / nk.sum()
        means = new_means
        variances = np.maximum(new_vars, variance_floor)
    gmm = GaussianMixture(weights, means, variances)
    return (gmm, trace) if return_trace else gmm


def left_to_right_transitions(n_states: int, self_loop: float = 0.6) -> np.ndarray:
    """(n+1) x (n+1) transitions: self-loop, advance, last state -> exit."""
    a = np.zeros((n_states + 1, n_states + 1))
    for i in range(n_states):
        a[i, i] = self_loop
        a[i, i + 1] = 1.0 - self_loop
    a[n_states, n_states] = 1.0
    return a


def _check_transitions(a: np.ndarray, n_states: int, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape != (n_states + 1, n_states + 1):
        raise ShapeError(f"{what}: transitions must be {(n_states + 1,) * 2}, got {a.shape}")
    if np.any(a < 0) or np.any(np.abs(a.sum(axis=1) - 1.0) > 1e-9):
        raise ConfigError("transitions", f"{what}: rows must be stochastic")
    if np.any(np.tril(a, -1) != 0):
        raise ConfigError("transitions", f"{what}: backward transitions are not allowed")
    return a


@dataclass(frozen=True, eq=False)
class PhoneHmm:
    phone_id: str
    states: tuple
    transitions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if not self.states:
            raise ConfigError("states", f"phone {self.phone_id!r} has no states")
        object.__setattr__(self, "transitions", _check_transitions(self.transitions, len(self.states), self.phone_id))

    @property
    def n_states(self) -> int:
        return len(self.states)

    def to_dict(self) -> dict:
        return {"states": [s.to_dict() for s in self.states], "transitions": self.transitions.tolist()}

    @classmethod
    def from_dict(cls, phone_id, d) -> "PhoneHmm":
        return cls(phone_id, [GaussianMixture.from_dict(s) for s in d["states"]], np.array(d["transitions"]))


@dataclass(frozen=True, eq=False)
class WordHmm:
    """Left-to-right state chain; ``labels`` names the phone state behind
    each emitting state, e.g. ``("ah", 0)``."""

    word: str
    states: tuple
    transitions: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "transitions", _check_transitions(self.transitions, len(self.states), self.word))

    @property
    def n_states(self) -> int:
        return len(self.states)


@dataclass
class Lexicon:
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for word, prons in self.entries.items():
            prons = [tuple(p) for p in prons]
            if not prons:
                raise ConfigError("lexicon", f"word {word!r} has no pronunciation")
            if any(len(p) == 0 for p in prons):
                raise ConfigError("lexicon", f"word {word!r} has an empty pronunciation")
            clean[word] = prons
        self.entries = clean

    def __contains__(self, word):
        return word in self.entries

    def __getitem__(self, word):
        try:
            return self.entries[word]
        except KeyError:
            raise ModelLookupError(f"word {word!r} not in lexicon") from None

    @property
    def words(self) -> list:
        return sorted(self.entries)

    def phones(self) -> set:
        return {ph for prons in self.entries.values() for p in prons for ph in p}

    def check_phones(self, phones) -> None:
        missing = self.phones() - set(phones)
        if missing:
            raise ModelLookupError(f"no phone model for {sorted(missing)}")


def concatenate_hmms(parts, name: str) -> WordHmm:
    """Chain HMMs, redirecting each part's exit mass to the next part's
    entry state. The last part keeps its exit."""
    states, labels = [], []
    offsets = []
    for p in parts:
        offsets.append(len(states))
        states.extend(p.states)
        labels.extend(getattr(p, "labels", ()) or [(getattr(p, "phone_id", name), j) for j in range(p.n_states)])
    n = len(states)
    a = np.zeros((n + 1, n + 1))
    for k, p in enumerate(parts):
        off, m = offsets[k], p.n_states
        a[off:off + m, off:off + m] = p.transitions[:m, :m]
        nxt = offsets[k + 1] if k + 1 < len(parts) else n
        a[off:off + m, nxt] += p.transitions[:m, m]
    a[n, n] = 1.0
    return WordHmm(name, states, a, labels)


def compose_word_hmm(lex: Lexicon, phones: dict, word: str, pron: int = 0) -> WordHmm:
    prons = lex[word]
    try:
        parts = [phones[ph] for ph in prons[pron]]
    except KeyError as exc:
        raise ModelLookupError(f"word {word!r} uses phone {exc.args[0]!r} with no model") from None
    return concatenate_hmms(parts, word)


def state_log_likelihoods(states, x: np.ndarray) -> np.ndarray:
    """(T, N) emission log densities, evaluating each distinct GMM once."""
    x = np.atleast_2d(x)
    cache = {}
    out = np.empty((x.shape[0], len(states)))
    for j, g in enumerate(states):
        key = id(g)
        if key not in cache:
            cache[key] = g.log_density(x)
        out[:, j] = cache[key]
    return out


def _observations(h: WordHmm, feats) -> np.ndarray:
    x = feats.vectors if isinstance(feats, FeatureMatrix) else np.atleast_2d(np.asarray(feats, dtype=float))
    if x.shape[0] == 0:
        raise UndefinedLikelihoodError("likelihood of an empty observation sequence is undefined")
    if x.shape[1] != h.states[0].dim:
        raise ShapeError(f"feature dimension {x.shape[1]} != model dimension {h.states[0].dim}")
    return x


def forward_log_likelihood(h: WordHmm, feats) -> float:
    """log P(O | W): log-sum over every state path (forward algorithm)."""
    x = _observations(h, feats)
    b = state_log_likelihoods(h.states, x)
    log_a = _log(h.transitions[:-1, :-1])
    alpha = np.full(h.n_states, -np.inf)
    alpha[0] = b[0, 0]
    for t in range(1, len(x)):
        alpha = logsumexp(alpha[:, None] + log_a, axis=0) + b[t]
    return float(alpha[-1])


def viterbi_align(h: WordHmm, feats) -> tuple:
    """Best state path and its log score."""
    x = _observations(h, feats)
    b = state_log_likelihoods(h.states, x)
    log_a = _log(h.transitions[:-1, :-1])
    t_len, n = b.shape
    delta = np.full(n, -np.inf)
    delta[0] = b[0, 0]
    back = np.zeros((t_len, n), dtype=int)
    for t in range(1, t_len):
        cand = delta[:, None] + log_a
        back[t] = cand.argmax(axis=0)
        delta = cand[back[t], np.arange(n)] + b[t]
    score = float(delta[-1])
    path = np.empty(t_len, dtype=int)
    path[-1] = n - 1
    for t in range(t_len - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return score, path


def best_path_log_likelihood(h: WordHmm, feats) -> float:
    return viterbi_align(h, feats)[0]


class BigramLm:
    """Add-one smoothed bigram model over ``vocab`` plus sentence markers.

    Histories: every word and ``<s>``. Predictions: every word and ``</s>``.
    """

    def __init__(self, vocab, bigram_counts=None):
        words = sorted(set(vocab) - {SENT_START, SENT_END})
        if not words:
            raise ConfigError("vocab", "language model needs at least one word")
        self.words = words
        self.histories = [SENT_START] + words
        self.targets = words + [SENT_END]
        self.bigram_counts = {}
        for (h, w), c in (bigram_counts or {}).items():
            if c:
                self.bigram_counts[(h, w)] = int(c)
        self.history_counts = {}
        for (h, _), c in self.bigram_counts.items():
            self.history_counts[h] = self.history_counts.get(h, 0) + c
        self._tidx = {w: i for i, w in enumerate(self.targets)}
        self._hidx = {w: i for i, w in enumerate(self.histories)}
        counts = np.zeros((len(self.histories), len(self.targets)))
        for (h, w), c in self.bigram_counts.items():
            counts[self._hidx[h], self._tidx[w]] = c
        probs = (counts + 1.0) / (counts.sum(axis=1, keepdims=True) + len(self.targets))
        self.log_table = np.log(probs)

    @property
    def vocab(self) -> list:
        return [SENT_START] + self.words + [SENT_END]

    def _h(self, h):
        try:
            return self._hidx[h]
        except KeyError:
            raise ModelLookupError(f"{h!r} is not in the LM vocabulary") from None

    def _t(self, w):
        try:
            return self._tidx[w]
        except KeyError:
            raise ModelLookupError(f"{w!r} is not in the LM vocabulary") from None

    def prob(self, word, history) -> float:
        return float(np.exp(self.log_table[self._h(history), self._t(word)]))

    def log_prob(self, word, history) -> float:
        return float(self.log_table[self._h(history), self._t(word)])

    def to_dict(self) -> dict:
        return {
            "vocab": self.words,
            "bigrams": [[h, w, c] for (h, w), c in sorted(self.bigram_counts.items())],
        }

    @classmethod
    def from_dict(cls, d) -> "BigramLm":
        return cls(d["vocab"], {(h, w): c for h, w, c in d["bigrams"]})


def train_bigram(corpus, vocab=None) -> BigramLm:
    """Count bigrams over sentences (lists of words) padded with markers."""
    corpus = [list(s) for s in corpus]
    if not corpus:
        raise ConfigError("corpus", "cannot train a language model on an empty corpus")
    words = set(vocab or ())
    counts = {}
    for sent in corpus:
        words.update(sent)
        padded = [SENT_START] + sent + [SENT_END]
        for h, w in zip(padded, padded[1:]):
            counts[(h, w)] = counts.get((h, w), 0) + 1
    return BigramLm(words, counts)


def lm_log_prob(lm: BigramLm, words) -> float:
    padded = [SENT_START] + list(words) + [SENT_END]
    return float(sum(lm.log_prob(w, h) for h, w in zip(padded, padded[1:])))


@dataclass(eq=False)
class ModelBundle:
    """Everything a decoder needs: phone HMMs, lexicon, LM, front-end."""

    phones: dict
    lexicon: Lexicon
    lm: BigramLm
    frontend: FrontendConfig | None = None
    sample_rate_hz: int | None = None

    def __post_init__(self):
        self.lexicon.check_phones(self.phones)
        missing = set(self.lexicon.words) - set(self.lm.words)
        if missing:
            raise ModelLookupError(f"lexicon words missing from LM: {sorted(missing)}")
        dims = {s.dim for p in self.phones.values() for s in p.states}
        if len(dims) != 1:
            raise ShapeError(f"phone models disagree on feature dimension: {sorted(dims)}")
        self._word_hmms = None

    @property
    def dim(self) -> int:
        return next(iter(self.phones.values())).states[0].dim

    @property
    def words(self) -> list:
        return self.lexicon.words

    def word_hmms(self) -> list:
        """(word, WordHmm) for every pronunciation, sorted by word."""
        if self._word_hmms is None:
            self._word_hmms = [
                (w, compose_word_hmm(self.lexicon, self.phones, w, k))
                for w in self.lexicon.words
                for k in range(len(self.lexicon[w]))
            ]
        return self._word_hmms

    def to_dict(self) -> dict:
        return {
            "schema": BUNDLE_SCHEMA,
            "phones": {k: self.phones[k].to_dict() for k in sorted(self.phones)},
            "lexicon": {w: [list(p) for p in self.lexicon[w]] for w in self.lexicon.words},
            "lm": self.lm.to_dict(),
            "frontend": self.frontend.to_dict() if self.frontend else None,
            "frontend_fingerprint": self.frontend.fingerprint() if self.frontend else None,
            "sample_rate_hz": self.sample_rate_hz,
        }

    @classmethod
    def from_dict(cls, d) -> "ModelBundle":
        if d.get("schema") != BUNDLE_SCHEMA:
            raise ConfigError("schema", f"expected {BUNDLE_SCHEMA!r}, got {d.get('schema')!r}")
        frontend = FrontendConfig(**d["frontend"]) if d.get("frontend") else None
        if frontend is not None and d.get("frontend_fingerprint") not in (None, frontend.fingerprint()):
            raise ConfigError("frontend_fingerprint", "does not match the stored front-end configuration")
        return cls(
            phones={k: PhoneHmm.from_dict(k, v) for k, v in d["phones"].items()},
            lexicon=Lexicon(d["lexicon"]),
            lm=BigramLm.from_dict(d["lm"]),
            frontend=frontend,
            sample_rate_hz=d.get("sample_rate_hz"),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "ModelBundle":
        return cls.from_dict(json.loads(Path(path).read_text()))


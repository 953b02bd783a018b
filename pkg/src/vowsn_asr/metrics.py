"""Word alignment, WER, accuracy and real-time factor."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .errors import UndefinedMetricError

MATCH, SUB, DEL, INS = "match", "sub", "del", "ins"


@dataclass(frozen=True)
class EditAlignment:
    insertions: int
    deletions: int
    substitutions: int
    ref_words: int
    pairs: tuple = field(default=(), compare=False)

    @property
    def errors(self) -> int:
        return self.insertions + self.deletions + self.substitutions

    @property
    def matches(self) -> int:
        return self.ref_words - self.substitutions - self.deletions

    def __add__(self, other: "EditAlignment") -> "EditAlignment":
        return EditAlignment(
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.substitutions + other.substitutions,
            self.ref_words + other.ref_words,
        )


def align_words(reference, hypothesis) -> EditAlignment:
    """Minimum edit distance alignment with unit costs.

    Among equally cheap backtraces a substitution (or match) is preferred
    over a deletion, and a deletion over an insertion.
    """
    ref, hyp = list(reference), list(hypothesis)
    n, m = len(ref), len(hyp)
    d = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i
    for j in range(1, m + 1):
        d[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1])
            d[i][j] = min(diag, d[i - 1][j] + 1, d[i][j - 1] + 1)

    pairs = []
    i, j = n, m
    ins = dels = subs = 0
    while i or j:
        if i and j and d[i][j] == d[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            op = MATCH if ref[i - 1] == hyp[j - 1] else SUB
            subs += op == SUB
            pairs.append((ref[i - 1], hyp[j - 1], op))
            i, j = i - 1, j - 1
        elif i and d[i][j] == d[i - 1][j] + 1:
            dels += 1
            pairs.append((ref[i - 1], None, DEL))
            i -= 1
        else:
            ins += 1
            pairs.append((None, hyp[j - 1], INS))
            j -= 1
    return EditAlignment(ins, dels, subs, n, tuple(reversed(pairs)))


def _need_words(a: EditAlignment):
    if a.ref_words <= 0:
        raise UndefinedMetricError("metric undefined for an empty reference")


def wer(a: EditAlignment) -> float:
    """(I + D + S) / N. Can exceed 1 when insertions dominate."""
    _need_words(a)
    return a.errors / a.ref_words


def accuracy(a: EditAlignment) -> float:
    """(N - D - S) / N; insertions are not counted."""
    _need_words(a)
    return (a.ref_words - a.deletions - a.substitutions) / a.ref_words


def wer_complement(a: EditAlignment) -> float:
    """1 - WER, the 'accuracy' figure some tables report instead."""
    _need_words(a)
    return (a.ref_words - a.errors) / a.ref_words


def xrt(recognition_time_s: float, speech_duration_s: float) -> float:
    """Real-time factor: recognition time / speech duration."""
    if speech_duration_s <= 0:
        raise UndefinedMetricError("real-time factor undefined for zero-length speech")
    if recognition_time_s < 0:
        raise ValueError("recognition time must be non-negative")
    return recognition_time_s / speech_duration_s


def normalize_transcript(line: str) -> list:
    return line.casefold().split()


def read_transcripts(path) -> list:
    with open(path) as fh:
        return [normalize_transcript(line) for line in fh.read().splitlines()]


METRIC_COLUMNS = ["utterance", "I", "D", "S", "N", "WER", "accuracy_eq7", "wer_complement"]


def _row(name, a: EditAlignment) -> list:
    if a.ref_words:
        rates = [wer(a), accuracy(a), wer_complement(a)]
    else:
        rates = ["", "", ""]
    return [name, a.insertions, a.deletions, a.substitutions, a.ref_words, *rates]


def score_transcripts(refs, hyps):
    """Per-utterance alignments and their corpus total."""
    if len(refs) != len(hyps):
        raise ValueError(f"{len(refs)} reference lines but {len(hyps)} hypothesis lines")
    per = [align_words(r, h) for r, h in zip(refs, hyps)]
    total = EditAlignment(0, 0, 0, 0)
    for a in per:
        total = total + a
    return per, total


def write_metric_csv(dest, per, total) -> None:
    """Per-utterance rows then a ``corpus`` row; ``dest`` is a path or stream."""
    if not hasattr(dest, "write"):
        with open(dest, "w", newline="") as fh:
            return write_metric_csv(fh, per, total)
    w = csv.writer(dest, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for k, a in enumerate(per):
        w.writerow(_row(str(k + 1), a))
    w.writerow(_row("corpus", total))

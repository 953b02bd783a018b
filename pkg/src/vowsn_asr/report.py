"""CSV and Markdown emission for simulation runs."""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict

from .wsn_sim import RUN_COLUMNS, WALL_COLUMNS

CUT_ORDER = ("NSR", "DSR", "ESR")

# (feature, metric, column, formatter)
TABLE_ROWS = [
    ("Vocabulary Size", "Number of words", "vocab_size", "int"),
    ("Speech Duration", "Seconds", "speech_duration_s", "num"),
    ("Recognition Time", "Seconds", "recognition_time_s", "num"),
    ("Speed (xRT)", "recognition time / speech duration", "xrt", "num"),
    ("Insertions (I)", "Count", "I", "num"),
    ("Deletions (D)", "Count", "D", "num"),
    ("Substitutions (S)", "Count", "S", "num"),
    ("Total Words (N)", "Count", "N", "num"),
    ("WER (%)", "(I + D + S) / N", "wer", "pct"),
    ("Accuracy (%)", "1 - WER", "wer_complement", "pct"),
    ("Accuracy (%)", "(N - D - S) / N", "accuracy_eq7", "pct"),
    ("Power Consumption", "mW (milliwatts)", "node_power_mw", "num"),
    ("Bandwidth Consumption", "kbps (kilobits per second)", "bandwidth_kbps", "num"),
    ("Latency", "Seconds (mean per utterance)", "latency_s", "num"),
    ("Failed Utterances", "Count", "n_failed", "num"),
]


def _cell(value, kind):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "n/a"
    if kind == "int":
        return f"{int(round(value)):,}"
    if kind == "pct":
        return f"{100 * value:.4g}%"
    return f"{value:.4g}"


def write_runs_csv(path_or_buf, rows, include_wall_clock=True) -> None:
    cols = [c for c in RUN_COLUMNS if include_wall_clock or c not in WALL_COLUMNS]
    own = isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__")
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    finally:
        if own:
            fh.close()


def read_runs_csv(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        parsed = {}
        for k, v in r.items():
            if k in ("scenario", "cut"):
                parsed[k] = v
            else:
                try:
                    parsed[k] = float(v)
                except (TypeError, ValueError):
                    parsed[k] = v
        out.append(parsed)
    return out


def comparison_markdown(rows, title="Architecture comparison") -> str:
    """Mean over seeds of each (scenario, cut), laid out one column per
    architecture."""
    groups = defaultdict(lambda: defaultdict(list))
    for r in rows:
        groups[r["scenario"]][r["cut"]].append(r)
    buf = io.StringIO()
    buf.write(f"# {title}\n")
    for scenario in sorted(groups):
        cuts = [c for c in CUT_ORDER if c in groups[scenario]]
        n_runs = max(len(v) for v in groups[scenario].values())
        buf.write(f"\n## {scenario or 'scenario'} ({n_runs} run{'s' if n_runs != 1 else ''} per architecture)\n\n")
        buf.write("| Feature | Metric | " + " | ".join(cuts) + " |\n")
        buf.write("|---|---|" + "---|" * len(cuts) + "\n")
        for feature, metric, col, kind in TABLE_ROWS:
            cells = []
            for c in cuts:
                vals = [float(r[col]) for r in groups[scenario][c] if r.get(col) not in (None, "")]
                vals = [v for v in vals if not math.isnan(v)]
                cells.append(_cell(sum(vals) / len(vals) if vals else None, kind))
            buf.write(f"| {feature} | {metric} | " + " | ".join(cells) + " |\n")
    return buf.getvalue()

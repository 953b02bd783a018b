"""Deterministic simulator of the NSR / DSR / ESR pipeline placements.

A scenario runs every utterance through the stages placed on the sensor
node and on the server, pushes the payload across a lossy packet channel
and aggregates recognition, latency, bandwidth and node-energy figures.

Compute time comes from a :class:`ComputeModel`. In the default
``"modeled"`` mode stage costs are derived from work counts (samples,
frames, decoder state updates) so every report field is reproducible;
``"measured"`` mode uses wall-clock stage timings instead. Wall-clock times
are always recorded in the ``wall_*`` fields.
"""

from __future__ import annotations

import enum
import json
import math
import time
from dataclasses import asdict, dataclass, field
from importlib import resources

import numpy as np

from .decoder import DecodeConfig, SearchGraph, viterbi_decode
from .errors import ConfigError, EmptyInputError
from .frontend import AudioClip, FeatureMatrix, FrontendConfig, mfcc, preprocess
from .metrics import EditAlignment, accuracy, align_words, wer, wer_complement, xrt


class Cut(str, enum.Enum):
    NSR = "NSR"
    DSR = "DSR"
    ESR = "ESR"


PLACEMENTS = {
    Cut.NSR: {"node": ("capture", "preprocess", "encode"), "server": ("feature_extraction", "decode")},
    Cut.DSR: {"node": ("capture", "preprocess", "feature_extraction", "feature_encode"), "server": ("decode",)},
    Cut.ESR: {"node": ("capture", "preprocess", "feature_extraction", "decode"), "server": ()},
}
PAYLOADS = {Cut.NSR: "raw-audio", Cut.DSR: "feature-frames", Cut.ESR: "text"}


@dataclass(frozen=True)
class ArchitectureCut:
    kind: Cut

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", Cut(self.kind))
        except ValueError:
            raise ConfigError("cut", f"unknown architecture {self.kind!r}; expected NSR, DSR or ESR") from None
        node, server = PLACEMENTS[self.kind]["node"], PLACEMENTS[self.kind]["server"]
        stages = node + server
        if len(set(stages)) != len(stages):
            raise ConfigError("placement", f"{self.kind.value}: a stage is placed twice")

    @property
    def placement(self) -> dict:
        return {"node": PLACEMENTS[self.kind]["node"], "server": PLACEMENTS[self.kind]["server"]}

    @property
    def payload_type(self) -> str:
        return PAYLOADS[self.kind]

    def on_node(self, stage: str) -> bool:
        return stage in PLACEMENTS[self.kind]["node"]


NSR, DSR, ESR = ArchitectureCut(Cut.NSR), ArchitectureCut(Cut.DSR), ArchitectureCut(Cut.ESR)


def _check_fields(obj, rules):
    for name, ok, msg in rules:
        if not ok(getattr(obj, name)):
            raise ConfigError(name, msg)


@dataclass(frozen=True)
class ChannelModel:
    """Defaults: an IEEE 802.15.4-class link."""

    bitrate_bps: float = 250_000.0
    packet_loss_prob: float = 0.0
    per_packet_latency_s: float = 0.01
    mtu_bytes: int = 127
    rng_seed: int = 0

    def __post_init__(self):
        _check_fields(self, [
            ("bitrate_bps", lambda v: v > 0, "must be positive"),
            ("packet_loss_prob", lambda v: 0 <= v <= 1, "must lie in [0, 1]"),
            ("per_packet_latency_s", lambda v: v >= 0, "must be non-negative"),
            ("mtu_bytes", lambda v: v >= 16, "must be at least 16"),
        ])

    @property
    def packet_bits(self) -> int:
        return self.mtu_bytes * 8


@dataclass(frozen=True)
class NodeProfile:
    """Sensor node power model.

    The defaults make the bundled reference fixture average 15, 30 and
    75 mW for NSR, DSR and ESR. Radio cost is carried per bit; the optional
    ``power_tx_mw`` adds a per-second transmit draw on top.
    """

    cpu_speed_factor: float = 10.0
    power_idle_mw: float = 2.2
    power_compute_mw: float = 364.2
    power_tx_mw: float = 0.0
    energy_per_bit_uj: float = 0.1

    def __post_init__(self):
        _check_fields(self, [
            ("cpu_speed_factor", lambda v: v >= 1, "must be at least 1"),
            ("power_idle_mw", lambda v: v >= 0, "must be non-negative"),
            ("power_compute_mw", lambda v: v >= 0, "must be non-negative"),
            ("power_tx_mw", lambda v: v >= 0, "must be non-negative"),
            ("energy_per_bit_uj", lambda v: v >= 0, "must be non-negative"),
        ])

    def energy_mj(self, compute_s, idle_s, transmit_s, bits) -> float:
        return (self.power_compute_mw * compute_s + self.power_idle_mw * idle_s
                + self.power_tx_mw * transmit_s + self.energy_per_bit_uj * bits / 1000.0)


@dataclass(frozen=True)
class CodecSpec:
    audio_bitrate_bps: int = 128_000
    feature_bits_per_coeff: int = 16
    text_bits_per_char: int = 8

    def __post_init__(self):
        for name in ("audio_bitrate_bps", "feature_bits_per_coeff", "text_bits_per_char"):
            if not getattr(self, name) > 0:
                raise ConfigError(name, "must be positive")


@dataclass(frozen=True)
class ComputeModel:
    """Server-speed stage costs; node stages are multiplied by the node's
    ``cpu_speed_factor``."""

    mode: str = "modeled"
    preprocess_s_per_sample: float = 1e-7
    feature_s_per_frame: float = 7e-5
    decode_s_per_state_update: float = 3e-6

    def __post_init__(self):
        if self.mode not in ("modeled", "measured"):
            raise ConfigError("mode", "must be 'modeled' or 'measured'")
        for name in ("preprocess_s_per_sample", "feature_s_per_frame", "decode_s_per_state_update"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be non-negative")


@dataclass
class Delivery:
    n_packets: int
    packet_bits: int
    payload_bits: int
    delivered: np.ndarray
    latency_s: float

    @property
    def lost(self) -> int:
        return int(self.n_packets - self.delivered.sum())

    @property
    def all_lost(self) -> bool:
        return self.n_packets > 0 and not self.delivered.any()


def payload_bits(cut: ArchitectureCut, utterance, codec: CodecSpec | None = None) -> int:
    codec = codec or CodecSpec()
    kind = cut.kind
    if kind is Cut.NSR and isinstance(utterance, AudioClip):
        return int(round(codec.audio_bitrate_bps * utterance.duration_s))
    if kind is Cut.DSR and isinstance(utterance, FeatureMatrix):
        return utterance.n_frames * (utterance.dim if utterance.n_frames else 0) * codec.feature_bits_per_coeff
    if kind is Cut.ESR and isinstance(utterance, str):
        return len(utterance) * codec.text_bits_per_char
    raise ConfigError("payload", f"{kind.value} carries {cut.payload_type}, got {type(utterance).__name__}")


def simulate_channel(bits: int, ch: ChannelModel, rng: np.random.Generator | None = None) -> Delivery:
    """Packetize ``bits`` and drop each packet independently.

    One uniform variate is drawn per packet whatever the loss probability,
    so runs that share a seed see nested loss patterns as the probability
    grows.
    """
    rng = rng if rng is not None else np.random.default_rng(ch.rng_seed)
    n = -(-int(bits) // ch.packet_bits)
    u = rng.random(n)
    delivered = u >= ch.packet_loss_prob
    latency = bits / ch.bitrate_bps + n * ch.per_packet_latency_s
    return Delivery(n, ch.packet_bits, int(bits), delivered, latency)


def _lost_ranges(delivery: Delivery):
    for k in np.flatnonzero(~delivery.delivered):
        start = int(k) * delivery.packet_bits
        yield start, min(start + delivery.packet_bits, delivery.payload_bits)


def apply_loss(cut: ArchitectureCut, payload, delivery: Delivery, codec: CodecSpec | None = None):
    """Degrade a payload by its lost packets: zero-filled audio (NSR),
    dropped feature frames (DSR), intact text (ESR)."""
    codec = codec or CodecSpec()
    if cut.kind is Cut.ESR or delivery.lost == 0:
        return payload
    if cut.kind is Cut.NSR:
        bits_per_sample = codec.audio_bitrate_bps / payload.sample_rate_hz
        x = payload.samples.copy()
        for lo, hi in _lost_ranges(delivery):
            x[int(math.floor(lo / bits_per_sample)):int(math.ceil(hi / bits_per_sample))] = 0
        return AudioClip(x, payload.sample_rate_hz)
    frame_bits = payload.dim * codec.feature_bits_per_coeff
    keep = np.ones(payload.n_frames, dtype=bool)
    for lo, hi in _lost_ranges(delivery):
        keep[lo // frame_bits:-(-hi // frame_bits)] = False
    return FeatureMatrix(payload.vectors[keep], payload.frame_rate_hz, payload.source_duration_s)


@dataclass
class UtteranceOutcome:
    uid: str
    reference: tuple
    hypothesis: tuple
    failed: bool
    speech_s: float
    recognition_s: float
    bits: int
    packets: int
    lost: int
    capture_s: float
    node_compute_s: float
    transmit_s: float
    server_compute_s: float
    node_energy_mj: float
    wall_node_s: float
    wall_server_s: float


RUN_COLUMNS = [
    "scenario", "cut", "seed", "packet_loss_prob", "vocab_size", "n_utterances", "n_failed",
    "I", "D", "S", "N", "wer", "accuracy_eq7", "wer_complement",
    "speech_duration_s", "recognition_time_s", "xrt",
    "bits_on_air", "bandwidth_kbps", "packets_sent", "packets_lost",
    "latency_s", "latency_capture_s", "latency_node_compute_s", "latency_transmit_s", "latency_server_compute_s",
    "node_energy_mj", "node_power_mw", "wall_node_s", "wall_server_s",
]
WALL_COLUMNS = ("wall_node_s", "wall_server_s")


@dataclass
class RunReport:
    cut: str
    wer: float
    accuracy_eq7: float
    wer_complement: float
    xrt: float
    bits_on_air: int
    latency_s: float
    latency_breakdown: dict
    node_energy_mj: float
    packets_sent: int
    packets_lost: int
    alignment: EditAlignment = field(default_factory=lambda: EditAlignment(0, 0, 0, 0))
    n_utterances: int = 0
    n_failed: int = 0
    speech_duration_s: float = 0.0
    recognition_time_s: float = 0.0
    vocab_size: int = 0
    seed: int = 0
    packet_loss_prob: float = 0.0
    scenario: str = ""
    wall_node_s: float = 0.0
    wall_server_s: float = 0.0
    outcomes: list = field(default_factory=list, repr=False)

    @property
    def hypotheses(self) -> list:
        return [o.hypothesis for o in self.outcomes]

    @property
    def failed(self) -> list:
        return [o.failed for o in self.outcomes]

    @property
    def bandwidth_kbps(self) -> float:
        return self.bits_on_air / self.speech_duration_s / 1000 if self.speech_duration_s else 0.0

    @property
    def node_power_mw(self) -> float:
        return self.node_energy_mj / self.speech_duration_s if self.speech_duration_s else 0.0

    def row(self) -> dict:
        a = self.alignment
        lb = self.latency_breakdown
        return {
            "scenario": self.scenario, "cut": self.cut, "seed": self.seed,
            "packet_loss_prob": self.packet_loss_prob, "vocab_size": self.vocab_size,
            "n_utterances": self.n_utterances, "n_failed": self.n_failed,
            "I": a.insertions, "D": a.deletions, "S": a.substitutions, "N": a.ref_words,
            "wer": self.wer, "accuracy_eq7": self.accuracy_eq7, "wer_complement": self.wer_complement,
            "speech_duration_s": self.speech_duration_s, "recognition_time_s": self.recognition_time_s,
            "xrt": self.xrt, "bits_on_air": self.bits_on_air, "bandwidth_kbps": self.bandwidth_kbps,
            "packets_sent": self.packets_sent, "packets_lost": self.packets_lost,
            "latency_s": self.latency_s, "latency_capture_s": lb["capture"],
            "latency_node_compute_s": lb["node_compute"], "latency_transmit_s": lb["transmit"],
            "latency_server_compute_s": lb["server_compute"],
            "node_energy_mj": self.node_energy_mj, "node_power_mw": self.node_power_mw,
            "wall_node_s": self.wall_node_s, "wall_server_s": self.wall_server_s,
        }


class _Clock:
    """Accumulates per-host stage costs in modeled or measured mode."""

    def __init__(self, compute: ComputeModel, node: NodeProfile, cut: ArchitectureCut):
        self.compute, self.node, self.cut = compute, node, cut
        self.node_s = self.server_s = self.wall_node = self.wall_server = 0.0
        self.recognition_s = 0.0

    def charge(self, stage, modeled_s, wall_s):
        on_node = self.cut.on_node(stage)
        base = modeled_s if self.compute.mode == "modeled" else wall_s
        cost = base * (self.node.cpu_speed_factor if on_node else 1.0)
        if on_node:
            self.node_s += cost
            self.wall_node += wall_s
        else:
            self.server_s += cost
            self.wall_server += wall_s
        if stage == "decode":
            self.recognition_s += cost


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def run_utterance(utt, cut: ArchitectureCut, models, graph, ch: ChannelModel, node: NodeProfile,
                  codec: CodecSpec, decode_cfg: DecodeConfig, frontend: FrontendConfig,
                  compute: ComputeModel, rng, trim_threshold=0.01) -> UtteranceOutcome:
    clock = _Clock(compute, node, cut)
    clip = utt.audio
    speech_s = clip.duration_s

    clean, wall = _timed(preprocess, clip, models.sample_rate_hz, trim_threshold)
    clock.charge("preprocess", len(clip) * compute.preprocess_s_per_sample, wall)

    def features(c):
        f, w = _timed(mfcc, c, frontend)
        clock.charge("feature_extraction", f.n_frames * compute.feature_s_per_frame, w)
        return f

    def decode(f):
        if f.n_frames == 0:
            return None
        try:
            r = viterbi_decode(f, models, decode_cfg, graph=graph)
        except EmptyInputError:
            return None
        clock.charge("decode", r.state_updates * compute.decode_s_per_state_update, r.decode_wall_time_s)
        return r

    result = None
    if cut.kind is Cut.NSR:
        bits = payload_bits(cut, clean, codec)
        delivery = simulate_channel(bits, ch, rng)
        if not delivery.all_lost:
            result = decode(features(apply_loss(cut, clean, delivery, codec)))
    elif cut.kind is Cut.DSR:
        feats = features(clean)
        bits = payload_bits(cut, feats, codec)
        delivery = simulate_channel(bits, ch, rng)
        if not delivery.all_lost:
            result = decode(apply_loss(cut, feats, delivery, codec))
    else:
        result = decode(features(clean))
        text = " ".join(result.words) if result else ""
        bits = payload_bits(cut, text, codec)
        delivery = simulate_channel(bits, ch, rng)

    failed = result is None or not result.words
    hyp = () if failed else tuple(result.words)
    idle_s = max(0.0, speech_s - clock.node_s)
    energy = node.energy_mj(clock.node_s, idle_s, delivery.latency_s, delivery.payload_bits)
    return UtteranceOutcome(
        uid=utt.uid, reference=tuple(utt.transcript), hypothesis=hyp, failed=failed,
        speech_s=speech_s, recognition_s=clock.recognition_s, bits=delivery.payload_bits,
        packets=delivery.n_packets, lost=delivery.lost, capture_s=speech_s,
        node_compute_s=clock.node_s, transmit_s=delivery.latency_s, server_compute_s=clock.server_s,
        node_energy_mj=energy, wall_node_s=clock.wall_node, wall_server_s=clock.wall_server,
    )


def run_scenario(corpus, cut: ArchitectureCut, models, ch: ChannelModel | None = None,
                 node: NodeProfile | None = None, codec: CodecSpec | None = None,
                 decode_cfg: DecodeConfig | None = None, frontend: FrontendConfig | None = None,
                 compute: ComputeModel | None = None, trim_threshold: float | None = 0.01,
                 scenario: str = "") -> RunReport:
    """Run every utterance of ``corpus`` (audio + transcript) through one
    placement and aggregate the results."""
    if not corpus:
        raise ConfigError("corpus", "must contain at least one utterance")
    if isinstance(cut, (str, Cut)):
        cut = ArchitectureCut(cut)
    ch = ch or ChannelModel()
    node = node or NodeProfile()
    codec = codec or CodecSpec()
    decode_cfg = decode_cfg or DecodeConfig()
    frontend = frontend or models.frontend or FrontendConfig()
    compute = compute or ComputeModel()
    graph = SearchGraph(models, decode_cfg.lm_scale, decode_cfg.word_insertion_penalty)
    rng = np.random.default_rng(ch.rng_seed)

    outcomes = [run_utterance(u, cut, models, graph, ch, node, codec, decode_cfg, frontend, compute,
                              rng, trim_threshold) for u in corpus]
    return aggregate(outcomes, cut, ch, scenario, len(models.words))


def aggregate(outcomes, cut: ArchitectureCut, ch: ChannelModel, scenario="", vocab_size=0) -> RunReport:
    total = EditAlignment(0, 0, 0, 0)
    for o in outcomes:
        total = total + align_words(o.reference, o.hypothesis)
    decoded = [o for o in outcomes if not o.failed]
    n = len(outcomes)
    speech = sum(o.speech_s for o in outcomes)
    breakdown = {
        "capture": sum(o.capture_s for o in outcomes) / n,
        "node_compute": sum(o.node_compute_s for o in outcomes) / n,
        "transmit": sum(o.transmit_s for o in outcomes) / n,
        "server_compute": sum(o.server_compute_s for o in outcomes) / n,
    }
    return RunReport(
        cut=cut.kind.value,
        wer=wer(total) if total.ref_words else math.nan,
        accuracy_eq7=accuracy(total) if total.ref_words else math.nan,
        wer_complement=wer_complement(total) if total.ref_words else math.nan,
        xrt=float(np.mean([xrt(o.recognition_s, o.speech_s) for o in decoded])) if decoded else math.nan,
        bits_on_air=sum(o.bits for o in outcomes),
        latency_s=sum(breakdown.values()),
        latency_breakdown=breakdown,
        node_energy_mj=sum(o.node_energy_mj for o in outcomes),
        packets_sent=sum(o.packets for o in outcomes),
        packets_lost=sum(o.lost for o in outcomes),
        alignment=total,
        n_utterances=n,
        n_failed=n - len(decoded),
        speech_duration_s=speech,
        recognition_time_s=sum(o.recognition_s for o in decoded),
        vocab_size=vocab_size,
        seed=ch.rng_seed,
        packet_loss_prob=ch.packet_loss_prob,
        scenario=scenario,
        wall_node_s=sum(o.wall_node_s for o in outcomes),
        wall_server_s=sum(o.wall_server_s for o in outcomes),
        outcomes=outcomes,
    )


def load_reference_fixture() -> dict:
    return json.loads(resources.files("vowsn_asr").joinpath("data/reference_fixture.json").read_text())


def run_fixture(fixture: dict | None = None, node: NodeProfile | None = None, scenario="reference") -> list:
    """Reports for a scripted scenario whose error counts, recognition
    times, node compute times and bandwidths are given rather than
    simulated. Only the metric and energy arithmetic runs."""
    fixture = fixture or load_reference_fixture()
    node = node or NodeProfile()
    dur = float(fixture["speech_duration_s"])
    reports = []
    for name in ("NSR", "DSR", "ESR"):
        c = fixture["cuts"][name]
        a = EditAlignment(c["I"], c["D"], c["S"], c["N"])
        bits = int(round(c["bandwidth_kbps"] * 1000 * dur))
        compute_s = float(c["node_compute_s"])
        energy = node.energy_mj(compute_s, max(0.0, dur - compute_s), 0.0, bits)
        server_s = 0.0 if name == "ESR" else float(c["recognition_time_s"])
        breakdown = {"capture": dur, "node_compute": compute_s, "transmit": 0.0, "server_compute": server_s}
        reports.append(RunReport(
            cut=name, wer=wer(a), accuracy_eq7=accuracy(a), wer_complement=wer_complement(a),
            xrt=xrt(c["recognition_time_s"], dur), bits_on_air=bits,
            latency_s=sum(breakdown.values()), latency_breakdown=breakdown,
            node_energy_mj=energy, packets_sent=0, packets_lost=0, alignment=a,
            n_utterances=1, speech_duration_s=dur, recognition_time_s=float(c["recognition_time_s"]),
            vocab_size=int(c["vocab_size"]), scenario=scenario,
        ))
    return reports


@dataclass(frozen=True)
class LinkObservation:
    up: bool
    loss: float = 0.0


@dataclass(frozen=True)
class SwitchPolicy:
    loss_threshold: float = 0.1
    margin: float = 0.05
    recover_after: int = 3

    def __post_init__(self):
        _check_fields(self, [
            ("loss_threshold", lambda v: 0 <= v <= 1, "must lie in [0, 1]"),
            ("margin", lambda v: v >= 0, "must be non-negative"),
            ("recover_after", lambda v: v >= 1, "must be at least 1"),
        ])


_RANK = {Cut.NSR: 0, Cut.DSR: 1, Cut.ESR: 2}


def _wanted(obs: LinkObservation, policy: SwitchPolicy) -> Cut:
    if not obs.up:
        return Cut.ESR
    return Cut.DSR if obs.loss > policy.loss_threshold else Cut.NSR


def mode_trace(history, policy: SwitchPolicy | None = None) -> list:
    """Architecture in force after each observation.

    Degradation (towards ESR) is immediate. Moving back towards NSR needs
    ``recover_after`` consecutive qualifying observations: link up, and for
    NSR a loss at least ``margin`` below the threshold.
    """
    policy = policy or SwitchPolicy()
    history = list(history)
    if not history:
        raise ConfigError("history", "needs at least one observation")
    current, streak, trace = None, 0, []
    for obs in history:
        target = _wanted(obs, policy)
        if current is None or _RANK[target] > _RANK[current]:
            current, streak = target, 0
        elif _RANK[target] < _RANK[current]:
            ok = obs.up and (target is Cut.DSR or obs.loss <= policy.loss_threshold - policy.margin)
            streak = streak + 1 if ok else 0
            if streak >= policy.recover_after:
                current, streak = target, 0
        else:
            streak = 0
        trace.append(current)
    return [ArchitectureCut(c) for c in trace]


def mode_switch_controller(history, policy: SwitchPolicy | None = None) -> ArchitectureCut:
    return mode_trace(history, policy)[-1]


def config_from_dict(cls, d: dict | None):
    """Build a config dataclass, rejecting unknown fields by name."""
    d = dict(d or {})
    known = set(cls.__dataclass_fields__)
    for key in d:
        if key not in known:
            raise ConfigError(key, f"unknown field for {cls.__name__}")
    return cls(**d)


def config_to_dict(obj) -> dict:
    return asdict(obj)

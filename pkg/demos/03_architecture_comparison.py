"""
Run one spoken corpus through the three placements of the recognizer:
everything on the server (NSR), features on the node (DSR), everything on
the node (ESR). Also writes a corpus, a model bundle and a manifest so the
same comparison can be rerun with ``vowsn-asr simulate``.
"""

import json
from pathlib import Path

from vowsn_asr.corpus import save_corpus
from vowsn_asr.report import comparison_markdown
from vowsn_asr.scenarios import make_audio_setup
from vowsn_asr.wsn_sim import ChannelModel, run_scenario

OUT = Path(__file__).resolve().parent.parent / "sim_out" / "default"

## Tone-synthesized speech for a ten-word vocabulary, models trained on 100 utterances
setup = make_audio_setup(n_words=10, n_train=100, n_test=50, seed=0)
print(f"test corpus: {len(setup.test)} utterances, "
      f"{sum(u.audio.duration_s for u in setup.test):.1f} s of audio")

## Perfect channel: same transcripts everywhere, very different costs
reports = [run_scenario(setup.test, cut, setup.models, scenario="clean") for cut in ("NSR", "DSR", "ESR")]
for r in reports:
    print(f"{r.cut}: WER={r.wer:.3f} bits={r.bits_on_air:>8} node energy={r.node_energy_mj:7.1f} mJ "
          f"latency={r.latency_s:.3f} s")

## A lossy channel hurts the streaming placements but not the text one
lossy = [run_scenario(setup.test, cut, setup.models, ChannelModel(packet_loss_prob=0.3, rng_seed=1),
                      scenario="loss 0.3") for cut in ("NSR", "DSR", "ESR")]
for r in lossy:
    print(f"loss 0.3, {r.cut}: WER={r.wer:.3f} ({r.packets_lost}/{r.packets_sent} packets lost)")

print(comparison_markdown([r.row() for r in reports + lossy]))

## Save everything for the command-line simulator
OUT.mkdir(parents=True, exist_ok=True)
save_corpus(OUT / "corpus", setup.test, setup.lexicon)
setup.models.save(OUT / "model.json")
manifest = {
    "format_version": 1,
    "output_dir": "results",
    "scenarios": [
        {"name": "clean", "corpus": "corpus", "models": "model.json"},
        {"name": "loss 0.1", "corpus": "corpus", "models": "model.json",
         "channel": {"packet_loss_prob": 0.1}, "seeds": [0, 1, 2, 3, 4]},
        {"name": "loss 0.3", "corpus": "corpus", "models": "model.json",
         "channel": {"packet_loss_prob": 0.3}, "seeds": [0, 1, 2, 3, 4]},
    ],
}
(OUT / "manifest.json").write_text(json.dumps(manifest, indent=1))
print(f"wrote {OUT / 'manifest.json'}; rerun with: vowsn-asr simulate --config {OUT / 'manifest.json'}")

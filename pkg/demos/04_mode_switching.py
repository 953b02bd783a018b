"""
A node that watches its link and moves between placements: ESR while the
link is down, DSR while it is lossy, NSR once it has been clean for a while.
"""

import numpy as np

from vowsn_asr.wsn_sim import LinkObservation, SwitchPolicy, mode_trace

## A day in the life of a link: outage, noisy recovery, then a clean stretch
rng = np.random.default_rng(7)
history = (
    [LinkObservation(False)] * 4
    + [LinkObservation(True, float(p)) for p in rng.uniform(0.15, 0.4, 6)]
    + [LinkObservation(True, float(p)) for p in rng.uniform(0.0, 0.03, 6)]
    + [LinkObservation(True, 0.1 + (0.01 if k % 2 else -0.01)) for k in range(8)]
)

policy = SwitchPolicy(loss_threshold=0.1, margin=0.05, recover_after=3)
trace = mode_trace(history, policy)
for k, (obs, cut) in enumerate(zip(history, trace)):
    link = f"up, loss {obs.loss:.2f}" if obs.up else "down"
    print(f"{k:>2}  {link:<15} -> {cut.kind.value}")

## Loss hovering right at the threshold does not cause flapping
switches = sum(a.kind != b.kind for a, b in zip(trace, trace[1:]))
print(f"{switches} switches over {len(history)} observations")

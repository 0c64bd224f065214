"""Loss reduction of fresh networks trained on a frozen corpus of generated
json inputs. Prints one line per pass so the curves can be plotted.

    python3 scripts/convergence.py --seed 1 --passes 20
"""
import argparse
import json

import numpy as np

from latentfuzz.config import CampaignConfig
from latentfuzz.orchestrator import CorpusRecord, init_state, refresh_latents, training_pass
from latentfuzz.targets import execute_target


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--passes", type=int, default=20)
    ap.add_argument("--records", type=int, default=100)
    ap.add_argument("--learning-rate", type=float, default=1e-4)
    args = ap.parse_args()

    cfg = CampaignConfig(target="json", learning_rate=args.learning_rate)
    source = init_state(cfg, args.seed)
    rng = np.random.default_rng(args.seed)
    z = rng.standard_normal((args.records, cfg.latent_dim)).astype(np.float32)
    runs = [execute_target("json", s, cfg.map_size) for s in source.gnn.generate(z, rng)]
    lat = source.vae.embed([r.trace for r in runs])

    state = init_state(cfg, args.seed + 1000)
    state.corpus = [CorpusRecord(r.input, r.trace, la, 0, r.outcome, zi) for r, la, zi in zip(runs, lat, z)]
    traces = np.stack([r.trace.classes for r in runs])
    refresh_latents(state)
    for p in range(args.passes + 1):
        if p:
            training_pass(state)
            refresh_latents(state)
        print(json.dumps({"pass": p, "vae_loss": state.vae.mean_loss(traces),
                          "gnn_ce": state.gnn.mean_ce(z, [r.input for r in runs])}), flush=True)


if __name__ == "__main__":
    main()

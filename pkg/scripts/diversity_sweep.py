"""Run seed-varied json campaigns and report trace growth, stalls, the
FFT/CFT similarity direction and the behaviour-targeting distances.

    python3 scripts/diversity_sweep.py --seeds 1 2 3 4 5 --epochs 100 --out sweep.json
"""
import argparse
import json
import logging
import time

from latentfuzz.analysis import behaviour_targeting_eval, latent_similarity_eval
from latentfuzz.config import parse_config
from latentfuzz.orchestrator import ever_stalled, init_state, run_campaign


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--target", default="json")
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--eval-n", type=int, default=10000)
    ap.add_argument("--out")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    overrides = [tuple(s.split("=", 1)) for s in args.set] + [("target", args.target)]
    rows = []
    for seed in args.seeds:
        cfg = parse_config(None, overrides + [("seed", str(seed)), ("epochs", str(args.epochs))])
        start = time.perf_counter()
        state = run_campaign(init_state(cfg), args.epochs)
        minutes = (time.perf_counter() - start) / 60
        sim = latent_similarity_eval(state.gnn, n=args.eval_n, rng=seed)
        beh = behaviour_targeting_eval(state.gnn, state.vae, cfg.target, rng=seed,
                                       map_size=cfg.map_size)
        row = {"seed": seed, "distinct_traces": len(state.seen), "stalled": ever_stalled(state.reports),
               "minutes": round(minutes, 1), "jaccard_fft": sim.mean_jaccard_fft,
               "jaccard_cft": sim.mean_jaccard_cft, "fft_below_cft": sim.fft_below_cft(),
               "cosine_mean": beh["mean"], "cosine_std": beh["std"]}
        print(json.dumps(row), flush=True)
        rows.append(row)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()

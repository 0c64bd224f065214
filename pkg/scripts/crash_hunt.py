"""Epochs until the first archived crash, with and without the latent MSE term.

    python3 scripts/crash_hunt.py --target csub --seeds 1 2 3 4 5 --max-epochs 200
"""
import argparse
import json

from latentfuzz.config import CampaignConfig
from latentfuzz.orchestrator import init_state, run_epoch
from latentfuzz.targets import Outcome, execute_target


def first_crash(target, seed, mse_weight, max_epochs):
    state = init_state(CampaignConfig(target=target, mse_weight=mse_weight), seed)
    while state.epoch < max_epochs and not state.crashes:
        run_epoch(state)
    ok = all(execute_target(target, c.input, state.config.map_size).outcome is Outcome.CRASH
             for c in state.crashes)
    return {"seed": seed, "mse_weight": mse_weight, "epochs_run": state.epoch,
            "crashed": bool(state.crashes), "reproduces": ok,
            "inputs": [c.input.decode("latin-1") for c in state.crashes]}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--target", default="csub")
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--max-epochs", type=int, default=200)
    ap.add_argument("--mse-weights", type=float, nargs="+", default=[1.0, 0.0])
    args = ap.parse_args()
    for w in args.mse_weights:
        for seed in args.seeds:
            print(json.dumps(first_crash(args.target, seed, w, args.max_epochs)), flush=True)


if __name__ == "__main__":
    main()

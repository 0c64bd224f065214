"""Command-line entry point.

Exit status: 0 on success, 1 on a usage error, 2 on a runtime failure
(missing or corrupt campaign files, training instability, bad inputs).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import analysis, nn, persistence, ranking
from .config import CampaignConfig, ConfigError, parse_config
from .orchestrator import build_models, init_state, run_epoch, stall_check

log = logging.getLogger("latentfuzz")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _config_flags(parser):
    group = parser.add_argument_group("campaign configuration")
    for f in fields(CampaignConfig):
        names = {f"--{f.name}", f"--{f.name.replace('_', '-')}"}
        group.add_argument(*sorted(names), dest=f"cfg_{f.name}", default=None, metavar="VALUE")
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")


def _overrides(args):
    pairs = []
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        pairs.append((key.strip(), value.strip()))
    for f in fields(CampaignConfig):
        value = getattr(args, f"cfg_{f.name}")
        if value is not None:
            pairs.append((f.name, value))
    return pairs


def _resolve_config(args):
    document = None
    if args.config:
        try:
            document = Path(args.config).read_text()
        except OSError as exc:
            raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
    try:
        return parse_config(document, _overrides(args))
    except ConfigError as exc:
        raise UsageError(str(exc)) from None


def _campaign_arg(parser):
    parser.add_argument("--campaign", required=True, help="campaign output directory")


def _load_models(directory):
    config = persistence.load_config(directory)
    ck = persistence.latest_checkpoint(directory)
    if ck is None:
        raise persistence.CorruptCampaignError(Path(directory) / "checkpoints", "no checkpoint found")
    vae, gnn = build_models(config, config.seed)
    persistence.load_checkpoint_into(ck, vae, gnn)
    return config, vae, gnn


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# -- commands ----------------------------------------------------------------------

def cmd_fuzz(args):
    if args.resume:
        state = persistence.load_corpus(args.resume)
        extra = [k for k, _ in _overrides(args) if k != "epochs"]
        if args.config or extra:
            raise UsageError("--resume only accepts --epochs; the saved config is used as is")
        epochs = int(dict(_overrides(args)).get("epochs", state.config.epochs))
        if epochs != state.config.epochs:
            state.config = state.config.replace(epochs=epochs)
        out = Path(args.resume)
    else:
        config = _resolve_config(args)
        out = Path(config.output or f"runs/{config.target}-seed{config.seed}")
        if (out / "state.json").exists():
            raise UsageError(f"{out} already holds a campaign; use --resume {out}")
        if not config.output:
            config = config.replace(output=str(out))
        state = init_state(config)
        out.mkdir(parents=True, exist_ok=True)
        persistence.save_corpus(state, out)
    cfg = state.config
    while state.epoch < cfg.epochs:
        report = run_epoch(state)
        persistence.append_report(out, report)
        log.info("epoch %d: new=%d total=%d corpus=%d vae=%.2f gnn_ce=%.1f crashes=%d (%.1fs)",
                 report.epoch, report.new_distinct_traces, report.distinct_traces_total,
                 report.corpus_size, report.vae_loss, report.gnn_ce, report.crashes_this_epoch,
                 report.wall_time)
        if stall_check(state.reports):
            log.warning("stalled: no new traces over the last 20 epochs")
        if cfg.checkpoint_every and state.epoch % cfg.checkpoint_every == 0:
            persistence.save_corpus(state, out)
    persistence.save_corpus(state, out)
    print(json.dumps({"output": str(out), "epochs": state.epoch,
                      "distinct_traces": len(state.seen), "corpus_size": len(state.corpus),
                      "crashes": len(state.crashes)}))
    return EXIT_OK


def _read_latents(path, dim):
    """Latent vectors from a ``.npy`` array or a JSON list of lists."""
    path = Path(path)
    if path.suffix == ".npy":
        z = np.load(path, allow_pickle=False)
    else:
        z = np.array(json.loads(path.read_text()), dtype=np.float64)
    z = np.atleast_2d(z).astype(np.float32)
    if z.ndim != 2 or z.shape[1] != dim:
        raise ValueError(f"{path}: latent vectors must have shape (n, {dim}), got {z.shape}")
    nn.check_finite(z, f"latents in {path}")
    return z


def cmd_generate(args):
    _, _, gnn = _load_models(args.campaign)
    rng = np.random.default_rng(args.seed)
    if args.latents:
        z = _read_latents(args.latents, gnn.latent_dim)
    else:
        z = rng.standard_normal((args.n, gnn.latent_dim)).astype(np.float32)
    strings = gnn.generate(z, rng)
    if args.out_dir:
        d = Path(args.out_dir)
        d.mkdir(parents=True, exist_ok=True)
        for i, s in enumerate(strings):
            (d / f"{i:05d}.bin").write_bytes(s)
    else:
        for s in strings:
            print(s.decode("latin-1").encode("unicode_escape").decode("ascii"))
    return EXIT_OK


def cmd_rank(args):
    state = persistence.load_corpus(args.campaign)
    if not state.corpus:
        raise persistence.CorruptCampaignError(Path(args.campaign) / "index.jsonl", "empty corpus")
    points = np.stack([r.latent for r in state.corpus])
    order = (ranking.cft_order if args.closest else ranking.fft_order)(points, limit=args.limit)
    lines = ["rank,index,hash,distance"]
    lines += [f"{i},{e.index},{state.corpus[e.index].hash},{e.distance!r}" for i, e in enumerate(order)]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_ngram_report(args):
    if (args.campaign is None) == (args.inputs is None):
        raise UsageError("give exactly one of --campaign or --inputs")
    if args.campaign:
        strings = [r.input for r in persistence.load_corpus(args.campaign).corpus]
    else:
        d = Path(args.inputs)
        if not d.is_dir():
            raise persistence.CorruptCampaignError(d, "not a directory")
        strings = [p.read_bytes() for p in sorted(d.iterdir()) if p.is_file()]
    rows = analysis.ngram_frequencies(strings, args.n_min, args.n_max, args.top)
    _emit(analysis.ngram_report_csv(rows), args.out)
    return EXIT_OK


def cmd_latent_eval(args):
    _, _, gnn = _load_models(args.campaign)
    report = analysis.latent_similarity_eval(gnn, n=args.n, head=args.head, reps=args.reps, rng=args.seed)
    out = report.to_dict()
    out["fft_below_cft"] = report.fft_below_cft()
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_behaviour_eval(args):
    config, vae, gnn = _load_models(args.campaign)
    report = analysis.behaviour_targeting_eval(gnn, vae, config.target, n=args.n, rng=args.seed,
                                               map_size=config.map_size, max_len=config.max_input_len)
    _emit(json.dumps(report, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_crash_report(args):
    state = persistence.load_corpus(args.campaign)
    groups = analysis.crash_report(state.crashes, state.config.target, state.config.map_size,
                                   state.config.max_input_len)
    _emit(json.dumps(analysis.crash_report_json(groups), indent=2) + "\n", args.out)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="latentfuzz", description="Self-training generative fuzzer.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fuzz", help="run or resume a campaign")
    _config_flags(p)
    p.add_argument("--resume", metavar="DIR", help="continue the campaign saved in DIR")
    p.set_defaults(func=cmd_fuzz)

    p = sub.add_parser("generate", help="sample strings from a trained generator")
    _campaign_arg(p)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--latents", help="JSON list or .npy array of latent vectors (overrides --n)")
    p.add_argument("--out-dir", "--out_dir", dest="out_dir")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("rank", help="farthest-first (or closest-first) order of the corpus")
    _campaign_arg(p)
    p.add_argument("--closest", action="store_true", help="closest-first instead of farthest-first")
    p.add_argument("--limit", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("ngram-report", help="most frequent n-grams as CSV")
    p.add_argument("--campaign")
    p.add_argument("--inputs", help="directory of input files")
    p.add_argument("--n-min", "--n_min", dest="n_min", type=int, default=3)
    p.add_argument("--n-max", "--n_max", dest="n_max", type=int, default=10)
    p.add_argument("--top", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ngram_report)

    p = sub.add_parser("latent-eval", help="FFT vs CFT n-gram similarity of generated strings")
    _campaign_arg(p)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--head", type=int, default=100)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_latent_eval)

    p = sub.add_parser("behaviour-eval", help="cosine distance between input and resulting latents")
    _campaign_arg(p)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_behaviour_eval)

    p = sub.add_parser("crash-report", help="archived crashes grouped by trace")
    _campaign_arg(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_crash_report)
    return parser


def run_command(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                            format="%(levelname)s %(message)s", stream=sys.stderr)
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (persistence.CorruptCampaignError, nn.InstabilityError, ConfigError, OSError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_RUNTIME


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()

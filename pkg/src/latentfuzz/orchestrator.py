"""The closed generate -> execute -> embed -> cull -> train loop."""
from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn, ranking
from .config import CampaignConfig, derive_seed
from .coverage import CoverageTrace
from .generator import Generator, perturb_input, sample_string, strings_to_classes
from .targets import ExecutionRecord, Outcome, execute_target
from .vae import VAE

log = logging.getLogger(__name__)

STALL_WINDOW = 20


@dataclass(eq=False)
class CorpusRecord:
    input: bytes
    trace: CoverageTrace
    latent: np.ndarray
    epoch_found: int
    outcome: Outcome
    gen_input: np.ndarray  # latent the generator was fed when it produced ``input``

    @property
    def hash(self):
        return hashlib.sha256(self.input).hexdigest()

    def same_as(self, other):
        return (self.input == other.input and self.trace == other.trace
                and self.outcome == other.outcome and self.epoch_found == other.epoch_found
                and np.array_equal(self.latent, other.latent)
                and np.array_equal(self.gen_input, other.gen_input))


@dataclass
class EpochReport:
    epoch: int
    new_distinct_traces: int
    distinct_traces_total: int
    corpus_size: int
    vae_loss: float
    gnn_loss: float
    gnn_ce: float
    crashes_this_epoch: int
    learning_rate: float
    wall_time: float = 0.0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def same_as(self, other):
        """Equality ignoring wall-clock time."""
        a, b = self.to_dict(), other.to_dict()
        a.pop("wall_time")
        b.pop("wall_time")
        return a == b


@dataclass
class FuzzerState:
    config: CampaignConfig
    vae: VAE
    gnn: Generator
    rng: np.random.Generator
    staged: np.ndarray
    epoch: int = 0
    corpus: list = field(default_factory=list)
    crashes: list = field(default_factory=list)
    seen: set = field(default_factory=set)
    reports: list = field(default_factory=list)
    learning_rate: float = 0.0
    lr_halved: bool = False


@dataclass
class GenerativeResult:
    executions: list
    new_distinct: int
    new_crashes: int


@dataclass
class TrainingResult:
    vae_loss: float
    gnn_loss: float
    gnn_ce: float


def build_models(config, seed):
    vae = VAE(map_size=config.map_size, latent_dim=config.latent_dim, hidden=config.vae_hidden,
              slope=config.leaky_slope, seed=derive_seed(seed, "vae"))
    gnn = Generator(latent_dim=config.latent_dim, base_len=config.base_len, filters=config.filters,
                    blocks=config.deconv_blocks, slope=config.leaky_slope, str_len=config.str_len_max,
                    dict_size=config.dict_size, residual=config.residual,
                    batch_norm=config.batch_norm, seed=derive_seed(seed, "gnn"))
    return vae, gnn


def init_state(config, seed=None):
    seed = config.seed if seed is None else seed
    if seed != config.seed:
        config = config.replace(seed=seed)
    vae, gnn = build_models(config, seed)
    noise = np.random.default_rng(derive_seed(seed, "initial-inputs"))
    staged = noise.standard_normal((config.batch_size, config.latent_dim)).astype(np.float32)
    return FuzzerState(config=config, vae=vae, gnn=gnn,
                       rng=np.random.default_rng(derive_seed(seed, "campaign")),
                       staged=staged, learning_rate=config.learning_rate)


def _embed_all(vae, traces, batch=256):
    if not traces:
        return np.zeros((0, vae.latent_dim), dtype=np.float32)
    classes = np.stack([t.classes for t in traces])
    return np.concatenate([vae.embed(classes[s:s + batch]) for s in range(0, len(traces), batch)])


def generative_pass(state):
    """Generate a batch, execute it, embed the traces, grow the corpus.

    Networks are only read here. Records whose trace already sits in the
    corpus are dropped; crashing inputs are archived.
    """
    cfg = state.config
    z = perturb_input(state.staged, state.rng, cfg.input_noise_sigma)
    strings = sample_string(state.gnn.forward(z), state.rng)
    executions = [execute_target(cfg.target, s, cfg.map_size, cfg.max_input_len) for s in strings]
    latents = _embed_all(state.vae, [e.trace for e in executions])
    nn.check_finite(latents, "trace encodings")

    in_corpus = {r.trace.digest() for r in state.corpus}
    archived = {c.input for c in state.crashes}
    new_distinct = new_crashes = 0
    for ex, zi, lat in zip(executions, z, latents):
        digest = ex.trace.digest()
        if digest not in state.seen:
            state.seen.add(digest)
            new_distinct += 1
        if digest not in in_corpus:
            in_corpus.add(digest)
            state.corpus.append(CorpusRecord(ex.input, ex.trace, lat.astype(np.float32), state.epoch,
                                             ex.outcome, zi.astype(np.float32)))
        if ex.outcome is Outcome.CRASH and ex.input not in archived:
            archived.add(ex.input)
            state.crashes.append(ex)
            new_crashes += 1
    return GenerativeResult(executions, new_distinct, new_crashes)


def cull_corpus(state):
    cfg = state.config
    if cfg.rank_space == "trace":
        if len(state.corpus) > cfg.k:
            order = ranking.fft_order(ranking.hamming_points([r.trace for r in state.corpus]), limit=cfg.k)
            state.corpus = [state.corpus[e.index] for e in order]
    else:
        state.corpus = ranking.cull(state.corpus, cfg.k)
    return state.corpus


def _train(state, lr):
    cfg = state.config
    rng = state.rng
    n = len(state.corpus)
    traces = np.stack([r.trace.classes for r in state.corpus])
    targets = strings_to_classes([r.input for r in state.corpus], cfg.str_len_max)
    gen_inputs = np.stack([r.gen_input for r in state.corpus])
    latents = np.stack([r.latent for r in state.corpus])
    vae_losses, gnn_losses, gnn_ces = [], [], []
    for _ in range(cfg.steps_per_pass):
        idx = rng.integers(0, n, cfg.train_batch_size)
        vae_losses.append(state.vae.train_step(traces[idx], rng, lr))
    for _ in range(cfg.steps_per_pass):
        idx = rng.integers(0, n, cfg.train_batch_size)
        loss, ce = state.gnn.train_step(gen_inputs[idx], targets[idx], latents[idx], lr,
                                        cfg.mse_weight, cfg.mse_exponent)
        gnn_losses.append(loss)
        gnn_ces.append(ce)
    mean = lambda xs: float(np.mean(xs)) if xs else 0.0  # noqa: E731
    return TrainingResult(mean(vae_losses), mean(gnn_losses), mean(gnn_ces))


def training_pass(state):
    """``steps_per_pass`` optimiser steps for each network on the corpus.

    On a non-finite loss the parameters (and rng) roll back to the start of
    the pass and the pass is retried once at half the learning rate.
    """
    if not state.corpus:
        raise ValueError("training pass needs a nonempty corpus")
    vae_snap, gnn_snap = state.vae.params.copy(), state.gnn.params.copy()
    rng_snap = state.rng.bit_generator.state
    try:
        return _train(state, state.learning_rate)
    except nn.InstabilityError as exc:
        state.vae.params.restore(vae_snap)
        state.gnn.params.restore(gnn_snap)
        state.rng.bit_generator.state = rng_snap
        if state.lr_halved:
            raise
        state.lr_halved = True
        state.learning_rate /= 2
        log.warning("epoch %d: %s; rolled back, learning rate halved to %g",
                    state.epoch, exc, state.learning_rate)
        return _train(state, state.learning_rate)


def refresh_latents(state):
    latents = _embed_all(state.vae, [r.trace for r in state.corpus])
    nn.check_finite(latents, "trace encodings")
    for r, lat in zip(state.corpus, latents):
        r.latent = lat.astype(np.float32)


def stage_inputs(state):
    """Next generator inputs: encodings of corpus records picked uniformly."""
    cfg = state.config
    n = len(state.corpus)
    if n >= cfg.batch_size:
        idx = state.rng.choice(n, cfg.batch_size, replace=False)
    else:
        idx = np.concatenate([np.arange(n), state.rng.integers(0, n, cfg.batch_size - n)])
    state.staged = np.stack([state.corpus[i].latent for i in idx]).astype(np.float32)
    return state.staged


def run_epoch(state):
    start = time.perf_counter()
    gen = generative_pass(state)
    cull_corpus(state)
    train = training_pass(state)
    refresh_latents(state)
    stage_inputs(state)
    report = EpochReport(
        epoch=state.epoch, new_distinct_traces=gen.new_distinct,
        distinct_traces_total=len(state.seen), corpus_size=len(state.corpus),
        vae_loss=train.vae_loss, gnn_loss=train.gnn_loss, gnn_ce=train.gnn_ce,
        crashes_this_epoch=gen.new_crashes, learning_rate=state.learning_rate,
        wall_time=time.perf_counter() - start)
    state.epoch += 1
    state.reports.append(report)
    return report


def stall_check(reports, window=STALL_WINDOW):
    """True when each of the last ``window`` epochs found no new trace."""
    recent = list(reports)[-window:]
    return len(recent) >= window and all(r.new_distinct_traces == 0 for r in recent)


def ever_stalled(reports, window=STALL_WINDOW):
    reports = list(reports)
    return any(stall_check(reports[:i], window) for i in range(window, len(reports) + 1))


def run_campaign(state, epochs, on_epoch=None):
    for _ in range(epochs):
        report = run_epoch(state)
        if on_epoch is not None:
            on_epoch(state, report)
        if stall_check(state.reports):
            log.info("epoch %d: no new traces in %d epochs", report.epoch, STALL_WINDOW)
    return state

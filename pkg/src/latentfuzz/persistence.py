"""On-disk campaign layout: corpus files, index, reports, checkpoints.

::

    config.json               resolved configuration
    state.json                epoch, learning rate, rng state, staged inputs, seen traces
    index.jsonl               one corpus record per line
    inputs/<sha256>.bin       raw input bytes
    traces/<sha256>.gnt       bucketed trace
    crashes/index.jsonl       archived crashes, in discovery order
    crashes/<sha256>.bin/.gnt
    reports.jsonl             one epoch report per line
    checkpoints/epoch_<e>     both networks' parameters and optimiser state
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from . import nn
from .config import parse_config
from .coverage import read_trace, write_trace
from .orchestrator import CorpusRecord, EpochReport, FuzzerState, build_models
from .targets import ExecutionRecord, Outcome

KEEP_CHECKPOINTS = 2


class CorruptCampaignError(ValueError):
    """A campaign file is missing or unreadable; the message names the file."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = Path(path)


def _sha(data):
    return hashlib.sha256(data).hexdigest()


def _write_atomic(path, data):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data.encode() if isinstance(data, str) else data)
    os.replace(tmp, path)


def _jsonl(rows):
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)


def _floats(arr):
    return [float(v) for v in np.asarray(arr, dtype=np.float32)]


def _jsonable_rng(state):
    return json.loads(json.dumps(state))


# -- checkpoints ----------------------------------------------------------------

def checkpoint_blob(vae, gnn):
    named = {}
    for prefix, model in (("vae/", vae), ("gnn/", gnn)):
        named.update({prefix + k: v for k, v in model.params._named().items()})
    meta = {"vae": {"rng_seed": vae.params.rng_seed, "step": vae.params.step},
            "gnn": {"rng_seed": gnn.params.rng_seed, "step": gnn.params.step}}
    return nn.checkpoint_bytes(named, meta)


def load_checkpoint_into(path, vae, gnn):
    """Overwrite both models' parameters from a checkpoint file."""
    try:
        named, meta = nn.read_checkpoint_bytes(Path(path).read_bytes())
        for prefix, model in (("vae/", vae), ("gnn/", gnn)):
            part = {k[len(prefix):]: v for k, v in named.items() if k.startswith(prefix)}
            loaded = nn.ModelParameters._from_named(part, meta[prefix[:-1]])
            _check_like(loaded, model.params)
            model.params = loaded
    except (ValueError, KeyError, OSError) as exc:
        raise CorruptCampaignError(path, f"bad checkpoint ({exc})") from None


def _check_like(loaded, reference):
    for d_new, d_ref in ((loaded.tensors, reference.tensors), (loaded.buffers, reference.buffers)):
        if set(d_new) != set(d_ref):
            raise ValueError("tensor names do not match the configured model")
        for k in d_ref:
            if d_new[k].shape != d_ref[k].shape:
                raise ValueError(f"tensor {k!r} has shape {d_new[k].shape}, expected {d_ref[k].shape}")


def write_checkpoint(state, directory, keep=KEEP_CHECKPOINTS):
    ckdir = Path(directory) / "checkpoints"
    ckdir.mkdir(parents=True, exist_ok=True)
    path = ckdir / f"epoch_{state.epoch}"
    _write_atomic(path, checkpoint_blob(state.vae, state.gnn))
    existing = sorted((p for p in ckdir.glob("epoch_*") if p.name[6:].isdigit()),
                      key=lambda p: int(p.name[6:]))
    for old in existing[:-keep]:
        old.unlink()
    return path


def latest_checkpoint(directory):
    ckdir = Path(directory) / "checkpoints"
    found = [p for p in ckdir.glob("epoch_*") if p.name[6:].isdigit()] if ckdir.is_dir() else []
    return max(found, key=lambda p: int(p.name[6:])) if found else None


# -- save ------------------------------------------------------------------------

def _write_pair(directory, data, trace, sub_in, sub_tr):
    h = _sha(data)
    bin_path = directory / sub_in / f"{h}.bin"
    if not bin_path.exists():
        _write_atomic(bin_path, data)
    trace_path = directory / sub_tr / f"{h}.gnt"
    if not trace_path.exists():
        write_trace(trace_path, trace)
    return h


def append_report(directory, report):
    with open(Path(directory) / "reports.jsonl", "a") as fh:
        fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")


def save_corpus(state, directory):
    """Write the whole campaign state so that ``load_corpus`` resumes it exactly."""
    d = Path(directory)
    for sub in ("inputs", "traces", "crashes", "checkpoints"):
        (d / sub).mkdir(parents=True, exist_ok=True)
    _write_atomic(d / "config.json", state.config.to_json())

    rows, keep = [], set()
    for r in state.corpus:
        h = _write_pair(d, r.input, r.trace, "inputs", "traces")
        keep.add(h)
        rows.append({"hash": h, "epoch_found": r.epoch_found, "outcome": r.outcome.value,
                     "latent": _floats(r.latent), "gen_input": _floats(r.gen_input)})
    _write_atomic(d / "index.jsonl", _jsonl(rows))
    for sub, ext in (("inputs", ".bin"), ("traces", ".gnt")):
        for p in (d / sub).glob("*" + ext):
            if p.stem not in keep:
                p.unlink()

    crash_rows = []
    for ex in state.crashes:
        h = _write_pair(d, ex.input, ex.trace, "crashes", "crashes")
        crash_rows.append({"hash": h, "detail": ex.detail})
    _write_atomic(d / "crashes" / "index.jsonl", _jsonl(crash_rows))
    _write_atomic(d / "reports.jsonl", _jsonl(r.to_dict() for r in state.reports))

    _write_atomic(d / "state.json", json.dumps({
        "epoch": state.epoch,
        "learning_rate": state.learning_rate,
        "lr_halved": state.lr_halved,
        "rng": _jsonable_rng(state.rng.bit_generator.state),
        "staged": [_floats(z) for z in state.staged],
        "seen": sorted(state.seen),
    }, sort_keys=True))
    write_checkpoint(state, d)
    return d


# -- load ------------------------------------------------------------------------

def _read_jsonl(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CorruptCampaignError(path, f"cannot read ({exc.strerror})") from None
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError:
            raise CorruptCampaignError(path, f"line {lineno} is not valid JSON") from None
    return rows


def _read_pair(directory, h, sub_in, sub_tr, map_size):
    bin_path = directory / sub_in / f"{h}.bin"
    trace_path = directory / sub_tr / f"{h}.gnt"
    try:
        data = bin_path.read_bytes()
    except OSError:
        raise CorruptCampaignError(bin_path, "missing input file") from None
    if _sha(data) != h:
        raise CorruptCampaignError(bin_path, "content does not match its hash")
    try:
        trace = read_trace(trace_path)
    except (OSError, ValueError) as exc:
        raise CorruptCampaignError(trace_path, f"bad trace ({exc})") from None
    if trace.map_size != map_size:
        raise CorruptCampaignError(trace_path, f"map size {trace.map_size} != configured {map_size}")
    return data, trace


def load_config(directory):
    path = Path(directory) / "config.json"
    try:
        return parse_config(path.read_text())
    except OSError:
        raise CorruptCampaignError(path, "missing config") from None
    except ValueError as exc:
        raise CorruptCampaignError(path, str(exc)) from None


def load_corpus(directory):
    d = Path(directory)
    if not d.is_dir():
        raise CorruptCampaignError(d, "not a campaign directory")
    config = load_config(d)
    state_path = d / "state.json"
    try:
        meta = json.loads(state_path.read_text())
        epoch = int(meta["epoch"])
    except OSError:
        raise CorruptCampaignError(state_path, "missing state file") from None
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCampaignError(state_path, f"malformed ({exc})") from None

    index_path = d / "index.jsonl"
    corpus = []
    for row in _read_jsonl(index_path):
        try:
            data, trace = _read_pair(d, row["hash"], "inputs", "traces", config.map_size)
            corpus.append(CorpusRecord(data, trace, np.array(row["latent"], dtype=np.float32),
                                       int(row["epoch_found"]), Outcome(row["outcome"]),
                                       np.array(row["gen_input"], dtype=np.float32)))
        except (KeyError, ValueError, TypeError) as exc:
            if isinstance(exc, CorruptCampaignError):
                raise
            raise CorruptCampaignError(index_path, f"bad record ({exc})") from None

    crashes = []
    for row in _read_jsonl(d / "crashes" / "index.jsonl"):
        data, trace = _read_pair(d, row["hash"], "crashes", "crashes", config.map_size)
        crashes.append(ExecutionRecord(data, trace, Outcome.CRASH, row.get("detail", "")))

    reports_path = d / "reports.jsonl"
    try:
        reports = [EpochReport.from_dict(r) for r in _read_jsonl(reports_path)]
    except TypeError as exc:
        raise CorruptCampaignError(reports_path, f"bad report ({exc})") from None
    reports = [r for r in reports if r.epoch < epoch]

    vae, gnn = build_models(config, config.seed)
    ck = d / "checkpoints" / f"epoch_{epoch}"
    if not ck.exists():
        raise CorruptCampaignError(ck, "no checkpoint for the saved epoch")
    load_checkpoint_into(ck, vae, gnn)

    rng = np.random.default_rng()
    try:
        rng.bit_generator.state = meta["rng"]
        staged = np.array(meta["staged"], dtype=np.float32).reshape(-1, config.latent_dim)
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptCampaignError(state_path, f"malformed ({exc})") from None
    return FuzzerState(config=config, vae=vae, gnn=gnn, rng=rng, staged=staged, epoch=epoch,
                       corpus=corpus, crashes=crashes, seen=set(meta.get("seen", [])),
                       reports=reports, learning_rate=float(meta["learning_rate"]),
                       lr_halved=bool(meta["lr_halved"]))


"""Evaluation procedures: n-gram reports, FFT/CFT string similarity,
behaviour targeting and crash summaries."""
from __future__ import annotations

import csv
import hashlib
import io
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from .generator import sample_string
from .ranking import cft_order, fft_order
from .targets import Outcome, execute_target


def ngrams(s, n_min, n_max):
    """All distinct contiguous substrings with length in [n_min, n_max]."""
    if n_min < 1 or n_max < n_min:
        raise ValueError(f"need 1 <= n_min <= n_max, got {n_min}, {n_max}")
    s = bytes(s)
    out = set()
    for n in range(n_min, min(n_max, len(s)) + 1):
        out.update(s[i:i + n] for i in range(len(s) - n + 1))
    return out


def jaccard(a, b):
    """|A & B| / |A | B|; 0.0 when both sets are empty."""
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def ngram_frequencies(strings, n_min=3, n_max=10, top=50):
    """Most frequent n-grams per length: list of (length, rank, ngram, count)."""
    rows = []
    for n in range(n_min, n_max + 1):
        counts = Counter()
        for s in strings:
            counts.update(s[i:i + n] for i in range(len(s) - n + 1))
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top]
        rows += [(n, rank + 1, gram, count) for rank, (gram, count) in enumerate(ranked)]
    return rows


def ngram_report_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["length", "rank", "ngram", "count"])
    for n, rank, gram, count in rows:
        w.writerow([n, rank, gram.decode("latin-1").encode("unicode_escape").decode("ascii"), count])
    return buf.getvalue()


@dataclass
class SimilarityReport:
    mean_jaccard_fft: float
    mean_jaccard_cft: float
    repetitions: int
    per_rep_fft: list = field(default_factory=list)
    per_rep_cft: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def fft_below_cft(self):
        return sum(f < c for f, c in zip(self.per_rep_fft, self.per_rep_cft))


def latent_seed(z):
    """Sampling seed fixed by the latent vector's float32 bytes."""
    return int.from_bytes(hashlib.sha256(np.asarray(z, dtype=np.float32).tobytes()).digest()[:8], "little")


def strings_from_latents(gnn, latents, batch=64):
    out = []
    for s in range(0, len(latents), batch):
        logits = gnn.forward(latents[s:s + batch])
        out += [sample_string(row, np.random.default_rng(latent_seed(z)))
                for row, z in zip(logits, latents[s:s + batch])]
    return out


def head_similarity(strings, n_min=1, n_max=10):
    """Mean Jaccard of each string's n-grams against those of the whole set."""
    sets = [ngrams(s, n_min, n_max) for s in strings]
    union = set().union(*sets)
    return float(np.mean([jaccard(a, union) for a in sets]))


def latent_similarity_eval(gnn, n=10000, head=100, reps=10, rng=None, n_min=1, n_max=10):
    """Compare strings generated from the FFT and CFT heads of random latents.

    Each repetition draws ``n`` standard-normal latent vectors, takes the
    first ``head`` entries of both traversals and scores each head by the
    mean n-gram Jaccard similarity of its strings to the head's union.
    """
    rng = np.random.default_rng(rng)
    per_fft, per_cft = [], []
    for _ in range(reps):
        z = rng.standard_normal((n, gnn.latent_dim)).astype(np.float32)
        for order, sink in ((fft_order, per_fft), (cft_order, per_cft)):
            idx = [e.index for e in order(z, limit=head)]
            sink.append(head_similarity(strings_from_latents(gnn, z[idx]), n_min, n_max))
    return SimilarityReport(float(np.mean(per_fft)), float(np.mean(per_cft)), reps, per_fft, per_cft)


def cosine_distance(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine distance is undefined for a zero vector")
    return float(np.clip(1.0 - a @ b / (na * nb), 0.0, 2.0))


def behaviour_targeting_eval(gnn, vae, target, n=100, rng=None, map_size=None, max_len=512):
    """Feed random latents through generate -> execute -> embed and report
    the cosine distance between each input latent and the resulting one."""
    rng = np.random.default_rng(rng)
    map_size = vae.map_size if map_size is None else map_size
    z = rng.standard_normal((n, gnn.latent_dim)).astype(np.float32)
    strings = sample_string(gnn.forward(z), rng)
    traces = [execute_target(target, s, map_size, max_len).trace for s in strings]
    z_out = vae.embed(traces)
    d = np.array([cosine_distance(a, b) for a, b in zip(z, z_out)])
    return {
        "n": n,
        "mean": float(d.mean()),
        "std": float(d.std()),
        "min": float(d.min()),
        "max": float(d.max()),
        "quantiles": {str(q): float(np.quantile(d, q)) for q in (0.1, 0.25, 0.5, 0.75, 0.9)},
        "within_0.1_of_1": float(np.mean(np.abs(d - 1.0) <= 0.1)),
        "distances": d.tolist(),
    }


def crash_report(crashes, target, map_size=1024, max_len=512):
    """Archived crashes grouped by identical trace, each input re-executed."""
    groups = {}
    for ex in crashes:
        g = groups.setdefault(ex.trace.digest(), {"trace": ex.trace.digest(), "inputs": [],
                                                  "detail": ex.detail, "reproduces": True})
        again = execute_target(target, ex.input, map_size, max_len)
        g["inputs"].append(ex.input)
        g["reproduces"] = g["reproduces"] and again.outcome is Outcome.CRASH
    return list(groups.values())


def crash_report_json(groups):
    return [{**g, "inputs": [i.decode("latin-1") for i in g["inputs"]], "count": len(g["inputs"])}
            for g in groups]

"""Variational autoencoder over bucketed coverage traces."""
from __future__ import annotations

import struct

import numpy as np

from . import nn
from .coverage import N_CLASSES, CoverageTrace


def _as_classes(traces, map_size):
    """Stack traces (CoverageTrace, arrays, or a 2-D array) into (B, M) uint8."""
    if isinstance(traces, CoverageTrace):
        arr = traces.classes[None, :]
    elif isinstance(traces, np.ndarray):
        arr = traces if traces.ndim == 2 else traces[None, :]
    else:
        arr = np.stack([t.classes if isinstance(t, CoverageTrace) else np.asarray(t) for t in traces])
    if arr.shape[-1] != map_size:
        raise nn.ShapeError(f"trace length {arr.shape[-1]} != configured map_size {map_size}")
    return arr


def reparameterize(mu, logvar, eps):
    """z = mu + exp(0.5 * logvar) * eps."""
    mu, logvar, eps = np.asarray(mu), np.asarray(logvar), np.asarray(eps)
    if eps.shape[-1] != mu.shape[-1]:
        raise nn.ShapeError(f"eps length {eps.shape[-1]} != latent dim {mu.shape[-1]}")
    return mu + np.exp(0.5 * logvar) * eps


def latent_to_bytes(z):
    """u32 length prefix followed by little-endian float32 values."""
    z = np.asarray(z, dtype="<f4").reshape(-1)
    return struct.pack("<I", z.size) + z.tobytes()


def latent_from_bytes(blob):
    if len(blob) < 4:
        raise ValueError("latent blob shorter than its length prefix")
    (n,) = struct.unpack("<I", blob[:4])
    if len(blob) != 4 + 4 * n:
        raise ValueError(f"latent blob holds {len(blob) - 4} bytes, prefix says {n} floats")
    return np.frombuffer(blob[4:], dtype="<f4").astype(np.float32)


def underfitting(losses, window=500, min_drop=0.1):
    """True when the loss failed to fall by ``min_drop`` (relative) within
    the first ``window`` steps. Compares the means of the first and last
    tenth of the window to smooth minibatch noise."""
    losses = np.asarray(losses[:window], dtype=np.float64)
    if losses.size < window:
        raise ValueError(f"need {window} losses, got {losses.size}")
    tenth = max(1, window // 10)
    start, end = losses[:tenth].mean(), losses[-tenth:].mean()
    return bool(end > (1.0 - min_drop) * start)


class VAE:
    """Dense encoder ``M -> hidden... -> (mu, logvar)``, mirrored decoder
    ``L -> ...hidden -> M x 8`` softmax."""

    def __init__(self, map_size=1024, latent_dim=16, hidden=(512, 128), slope=nn.LEAKY_SLOPE,
                 seed=0, dtype=np.float32):
        self.map_size = map_size
        self.latent_dim = latent_dim
        self.hidden = tuple(hidden)
        self.slope = slope
        self.dtype = dtype
        self.params = nn.ModelParameters(seed)
        rng = np.random.default_rng(seed)

        def dense(name, n_in, n_out):
            self.params.add(name + ".W", nn.glorot_uniform(rng, (n_out, n_in), n_in, n_out, dtype))
            self.params.add(name + ".b", np.zeros(n_out, dtype=dtype))

        dims = [map_size, *self.hidden]
        for i in range(len(self.hidden)):
            dense(f"enc{i}", dims[i], dims[i + 1])
        dense("mu", dims[-1], latent_dim)
        dense("logvar", dims[-1], latent_dim)
        ddims = [latent_dim, *reversed(self.hidden)]
        for i in range(len(self.hidden)):
            dense(f"dec{i}", ddims[i], ddims[i + 1])
        dense("out", ddims[-1], map_size * N_CLASSES)

    # -- forward pieces -------------------------------------------------------

    def _dense(self, name, x):
        p = self.params
        return nn.dense_forward(p[name + ".W"], p[name + ".b"], x)

    def _encode(self, classes):
        x = classes.astype(self.dtype) / (N_CLASSES - 1)
        cache = []
        h = x
        for i in range(len(self.hidden)):
            pre = self._dense(f"enc{i}", h)
            cache.append((h, pre))
            h = nn.leaky_relu(pre, self.slope)
        return self._dense("mu", h), self._dense("logvar", h), (cache, h)

    def _decode_logits(self, z):
        cache = []
        h = z
        for i in range(len(self.hidden)):
            pre = self._dense(f"dec{i}", h)
            cache.append((h, pre))
            h = nn.leaky_relu(pre, self.slope)
        logits = self._dense("out", h).reshape(*z.shape[:-1], self.map_size, N_CLASSES)
        return logits, (cache, h)

    # -- public API ---------------------------------------------------------------

    def encode(self, traces):
        """Return (mu, logvar), each (B, L), or (L,) for a single trace."""
        single = isinstance(traces, CoverageTrace) or (isinstance(traces, np.ndarray) and traces.ndim == 1)
        mu, logvar, _ = self._encode(_as_classes(traces, self.map_size))
        if single:
            return mu[0], logvar[0]
        return mu, logvar

    def embed(self, traces):
        """Deterministic latent encoding: the mean only, no sampling."""
        return self.encode(traces)[0]

    def decode(self, z):
        """Per-position class distributions, shape (..., map_size, 8)."""
        z = np.asarray(z, dtype=self.dtype)
        if z.shape[-1] != self.latent_dim:
            raise nn.ShapeError(f"latent length {z.shape[-1]} != {self.latent_dim}")
        logits, _ = self._decode_logits(z)
        return nn.softmax(logits)

    def loss(self, traces, eps):
        """Per-trace loss: summed per-position cross-entropy plus KL."""
        classes = _as_classes(traces, self.map_size)
        mu, logvar, _ = self._encode(classes)
        z = reparameterize(mu, logvar, np.asarray(eps, dtype=self.dtype).reshape(mu.shape))
        logits, _ = self._decode_logits(z)
        rec = nn.softmax_ce(logits, classes).sum(axis=-1)
        return nn.check_finite(rec + nn.kl_gauss(mu, logvar), "VAE loss")

    def activation_signs(self, traces, eps):
        """Packed sign pattern of every leaky pre-activation."""
        classes = _as_classes(traces, self.map_size)
        mu, logvar, (enc_cache, _) = self._encode(classes)
        z = reparameterize(mu, logvar, np.asarray(eps, dtype=self.dtype).reshape(mu.shape))
        _, (dec_cache, _) = self._decode_logits(z)
        pres = [pre for _, pre in enc_cache + dec_cache]
        return np.packbits(np.concatenate([(pre > 0).ravel() for pre in pres])).tobytes()

    def loss_and_grads(self, traces, eps):
        """Mean loss over the batch and its gradients for every parameter."""
        p = self.params
        classes = _as_classes(traces, self.map_size)
        batch = classes.shape[0]
        mu, logvar, (enc_cache, h_enc) = self._encode(classes)
        eps = np.asarray(eps, dtype=self.dtype).reshape(mu.shape)
        std = np.exp(0.5 * logvar)
        z = mu + std * eps
        logits, (dec_cache, h_dec) = self._decode_logits(z)
        scale = 1.0 / batch
        ce, dlogits = nn.softmax_ce_and_grad(logits, classes, np.full(classes.shape, scale, dtype=self.dtype))
        kl = nn.kl_gauss(mu, logvar)
        loss = float(np.mean(ce.sum(axis=-1) + kl))
        if not np.isfinite(loss):
            raise nn.InstabilityError("non-finite VAE loss")

        grads = {}
        dout = dlogits.reshape(batch, -1)
        grads["out.W"], grads["out.b"], dh = nn.dense_backward(p["out.W"], h_dec, dout)
        for i in reversed(range(len(self.hidden))):
            h_in, pre = dec_cache[i]
            dpre = nn.leaky_relu_backward(pre, dh, self.slope)
            grads[f"dec{i}.W"], grads[f"dec{i}.b"], dh = nn.dense_backward(p[f"dec{i}.W"], h_in, dpre)
        dz = dh
        dmu_kl, dlogvar_kl = nn.kl_gauss_backward(mu, logvar, np.full(batch, scale, dtype=self.dtype))
        dmu = dz + dmu_kl
        dlogvar = dz * eps * 0.5 * std + dlogvar_kl
        grads["mu.W"], grads["mu.b"], dh_mu = nn.dense_backward(p["mu.W"], h_enc, dmu)
        grads["logvar.W"], grads["logvar.b"], dh_lv = nn.dense_backward(p["logvar.W"], h_enc, dlogvar)
        dh = dh_mu + dh_lv
        for i in reversed(range(len(self.hidden))):
            h_in, pre = enc_cache[i]
            dpre = nn.leaky_relu_backward(pre, dh, self.slope)
            grads[f"enc{i}.W"], grads[f"enc{i}.b"], dh = nn.dense_backward(p[f"enc{i}.W"], h_in, dpre,
                                                                          need_dx=i > 0)
        return loss, grads

    def train_step(self, traces, rng, lr):
        classes = _as_classes(traces, self.map_size)
        eps = rng.standard_normal((classes.shape[0], self.latent_dim)).astype(self.dtype)
        loss, grads = self.loss_and_grads(classes, eps)
        nn.rmsprop_step(self.params, grads, lr)
        return loss

    def mean_loss(self, traces, batch=256):
        """Mean loss with zero reparameterisation noise (deterministic)."""
        classes = _as_classes(traces, self.map_size)
        total = 0.0
        for s in range(0, classes.shape[0], batch):
            part = classes[s:s + batch]
            total += float(self.loss(part, np.zeros((part.shape[0], self.latent_dim))).sum())
        return total / classes.shape[0]

    def zero_(self):
        for t in self.params.tensors.values():
            t[...] = 0
        return self

"""Transposed-convolution string generator.

A latent vector is upscaled by a dense layer to ``(base_len, filters)``,
passed through a stack of kernel-3 deconvolution blocks (stride 2 doubles
the length, stride 1 blocks carry residual shortcuts) and projected to
``dict_size`` logits per output position. Class 0 is padding; class ``c>0``
is byte ``c-1``.
"""
from __future__ import annotations

import math

import numpy as np

from . import nn

STR_LEN_MAX = 512
DICT_SIZE = 129
INPUT_NOISE_SIGMA = 0.1


def stride_schedule(blocks, base_len, str_len):
    """Strides of every block: stride-1 blocks spread before each doubling."""
    ratio = str_len // base_len
    if ratio * base_len != str_len or ratio & (ratio - 1):
        raise nn.ShapeError(f"str_len {str_len} must be base_len {base_len} times a power of two")
    doublings = int(math.log2(ratio))
    if blocks < doublings:
        raise nn.ShapeError(f"{blocks} blocks cannot reach length {str_len} from {base_len}")
    flat = blocks - doublings
    if doublings == 0:
        return [1] * blocks
    schedule = []
    for level in range(doublings):
        schedule += [1] * (flat // doublings + (level < flat % doublings))
        schedule.append(2)
    return schedule


def strings_to_classes(strings, str_len=STR_LEN_MAX):
    """Encode byte strings as (B, str_len) class ids, padding with 0."""
    out = np.zeros((len(strings), str_len), dtype=np.int64)
    for i, s in enumerate(strings):
        if len(s) > str_len:
            raise ValueError(f"string of length {len(s)} exceeds {str_len}")
        arr = np.frombuffer(bytes(s), dtype=np.uint8)
        if arr.size and arr.max() >= 128:
            raise ValueError("generated strings are 7-bit ASCII")
        out[i, :arr.size] = arr.astype(np.int64) + 1
    return out


def perturb_input(z, rng, sigma=INPUT_NOISE_SIGMA):
    """Add elementwise N(0, sigma^2) exploration noise to latent inputs."""
    z = np.asarray(z)
    if sigma == 0:
        return z.copy()
    return z + rng.normal(0.0, sigma, size=z.shape).astype(z.dtype)


def sample_classes(logits, rng):
    """Draw one class per position from softmax(logits), independently."""
    probs = nn.softmax(np.asarray(logits, dtype=np.float64))
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1])[..., None]
    cls = (cdf < u * cdf[..., -1:]).sum(axis=-1)
    return np.minimum(cls, probs.shape[-1] - 1)


def classes_to_string(classes):
    classes = np.asarray(classes)
    return bytes((classes[classes > 0] - 1).astype(np.uint8).tolist())


def sample_string(logits, rng):
    """Sample a string from one (str_len, dict) logit array, or a list of
    strings from a (B, str_len, dict) batch. Padding draws are dropped."""
    logits = np.asarray(logits)
    cls = sample_classes(logits, rng)
    if cls.ndim == 1:
        return classes_to_string(cls)
    return [classes_to_string(row) for row in cls]


def argmax_string(logits):
    """Diagnostic-only deterministic decoding."""
    return classes_to_string(np.argmax(logits, axis=-1))


def _crop_offset(kernel_size, stride):
    return (kernel_size - stride) // 2


class Generator:
    def __init__(self, latent_dim=16, base_len=16, filters=32, blocks=10, kernel_size=3,
                 slope=nn.LEAKY_SLOPE, str_len=STR_LEN_MAX, dict_size=DICT_SIZE,
                 residual=True, batch_norm=False, seed=0, dtype=np.float32):
        self.latent_dim = latent_dim
        self.base_len = base_len
        self.filters = filters
        self.kernel_size = kernel_size
        self.slope = slope
        self.str_len = str_len
        self.dict_size = dict_size
        self.residual = residual
        self.batch_norm = batch_norm
        self.dtype = dtype
        self.strides = stride_schedule(blocks, base_len, str_len)
        self.params = p = nn.ModelParameters(seed)
        rng = np.random.default_rng(seed)
        width = base_len * filters
        p.add("up.W", nn.glorot_uniform(rng, (width, latent_dim), latent_dim, width, dtype))
        p.add("up.b", np.zeros(width, dtype=dtype))
        k = kernel_size
        for i, _ in enumerate(self.strides):
            p.add(f"blk{i}.K", nn.glorot_uniform(rng, (k, filters, filters), k * filters, k * filters, dtype))
            p.add(f"blk{i}.b", np.zeros(filters, dtype=dtype))
            if batch_norm:
                p.add(f"blk{i}.gamma", np.ones(filters, dtype=dtype))
                p.add(f"blk{i}.beta", np.zeros(filters, dtype=dtype))
                p.buffers[f"blk{i}.mean"] = np.zeros(filters, dtype=dtype)
                p.buffers[f"blk{i}.var"] = np.ones(filters, dtype=dtype)
        p.add("proj.W", nn.glorot_uniform(rng, (dict_size, filters), filters, dict_size, dtype))
        p.add("proj.b", np.zeros(dict_size, dtype=dtype))

    def zero_(self):
        for t in self.params.tensors.values():
            t[...] = 0
        return self

    # -- forward / backward ----------------------------------------------------

    def _forward(self, z, training=False):
        p = self.params
        z = np.asarray(z, dtype=self.dtype)
        if z.shape[-1] != self.latent_dim:
            raise nn.ShapeError(f"latent length {z.shape[-1]} != {self.latent_dim}")
        pre0 = nn.dense_forward(p["up.W"], p["up.b"], z)
        h = nn.leaky_relu(pre0, self.slope).reshape(*z.shape[:-1], self.base_len, self.filters)
        caches = []
        for i, stride in enumerate(self.strides):
            x = h
            full = nn.deconv1d_forward(x, p[f"blk{i}.K"], stride)
            off = _crop_offset(self.kernel_size, stride)
            out_len = x.shape[-2] * stride
            pre = full[..., off:off + out_len, :] + p[f"blk{i}.b"]
            act = nn.leaky_relu(pre, self.slope)
            bn = None
            if self.batch_norm:
                if training:
                    act, bn = nn.batch_norm_forward(act, p[f"blk{i}.gamma"], p[f"blk{i}.beta"])
                else:
                    act = nn.batch_norm_inference(act, p[f"blk{i}.gamma"], p[f"blk{i}.beta"],
                                                  p.buffers[f"blk{i}.mean"], p.buffers[f"blk{i}.var"])
            h = x + act if (self.residual and stride == 1) else act
            caches.append((x, pre, bn, full.shape))
        logits = nn.dense_forward(p["proj.W"], p["proj.b"], h)
        return logits, (z, pre0, caches, h)

    def forward(self, z):
        """Logits of shape (..., str_len, dict_size)."""
        logits, _ = self._forward(z)
        return nn.check_finite(logits, "generator output")

    def loss(self, z_input, target, z_true, mse_weight=1.0, mse_exponent=2.0):
        """Per-sample loss: summed per-position cross-entropy against ``target``
        (byte strings or class arrays) plus weighted mean |z_true - z_input|^p."""
        z_input = np.asarray(z_input, dtype=self.dtype)
        single = z_input.ndim == 1
        zb = z_input[None] if single else z_input
        classes = self._target_classes(target, zb.shape[0])
        logits, _ = self._forward(zb)
        ce = nn.softmax_ce(logits, classes).sum(axis=-1)
        diff = np.abs(np.asarray(z_true, dtype=self.dtype).reshape(zb.shape) - zb)
        total = ce + mse_weight * np.mean(diff ** mse_exponent, axis=-1)
        return total[0] if single else total

    def batch_loss(self, z_input, target, z_true, mse_weight=1.0, mse_exponent=2.0):
        """Mean loss exactly as ``loss_and_grads`` computes it (training-mode
        normalisation, no gradients, no running-statistics update)."""
        zb = np.atleast_2d(np.asarray(z_input, dtype=self.dtype))
        classes = self._target_classes(target, zb.shape[0])
        logits, _ = self._forward(zb, training=True)
        ce = nn.softmax_ce(logits, classes).sum(axis=-1)
        diff = np.abs(zb - np.asarray(z_true, dtype=self.dtype).reshape(zb.shape))
        return float(np.mean(ce + mse_weight * np.mean(diff ** mse_exponent, axis=-1)))

    def activation_signs(self, z_input):
        """Packed sign pattern of every leaky pre-activation (training mode)."""
        zb = np.atleast_2d(np.asarray(z_input, dtype=self.dtype))
        _, (_, pre0, caches, _) = self._forward(zb, training=True)
        return np.packbits(np.concatenate([(pre0 > 0).ravel()] + [(c[1] > 0).ravel() for c in caches])).tobytes()

    def _target_classes(self, target, batch):
        if isinstance(target, (bytes, bytearray)):
            target = [target]
        if isinstance(target, np.ndarray) and target.dtype.kind in "iu":
            classes = target.reshape(batch, self.str_len)
        else:
            classes = strings_to_classes(list(target), self.str_len)
        if classes.shape != (batch, self.str_len):
            raise nn.ShapeError(f"targets {classes.shape} vs batch {batch}")
        return classes

    def loss_and_grads(self, z_input, target, z_true, mse_weight=1.0, mse_exponent=2.0):
        """Mean loss over the batch; returns (loss, ce_mean, grads, dz_input).

        The squared-error term compares the input latent with the encoding of
        the trace its string produced; that encoding is taken as a constant
        (no gradient through the program under test), so it reaches the
        input gradient but not the parameters.
        """
        p = self.params
        zb = np.atleast_2d(np.asarray(z_input, dtype=self.dtype))
        batch = zb.shape[0]
        classes = self._target_classes(target, batch)
        logits, (z, pre0, caches, h) = self._forward(zb, training=True)
        scale = 1.0 / batch
        ce, dlogits = nn.softmax_ce_and_grad(logits, classes, np.full(classes.shape, scale, dtype=self.dtype))
        ce = ce.sum(axis=-1)
        diff = zb - np.asarray(z_true, dtype=self.dtype).reshape(zb.shape)
        mse = np.mean(np.abs(diff) ** mse_exponent, axis=-1)
        ce_mean = float(ce.mean())
        loss = float(np.mean(ce + mse_weight * mse))
        if not np.isfinite(loss):
            raise nn.InstabilityError("non-finite generator loss")

        grads = {}
        grads["proj.W"], grads["proj.b"], dh = nn.dense_backward(p["proj.W"], h, dlogits)
        for i in reversed(range(len(self.strides))):
            stride = self.strides[i]
            x, pre, bn, full_shape = caches[i]
            dact = dh
            if self.batch_norm:
                grads[f"blk{i}.gamma"], grads[f"blk{i}.beta"], dact = nn.batch_norm_backward(
                    bn, p[f"blk{i}.gamma"], dact)
            dpre = nn.leaky_relu_backward(pre, dact, self.slope)
            grads[f"blk{i}.b"] = dpre.reshape(-1, self.filters).sum(axis=0)
            dfull = np.zeros(full_shape, dtype=dpre.dtype)
            off = _crop_offset(self.kernel_size, stride)
            dfull[..., off:off + pre.shape[-2], :] = dpre
            grads[f"blk{i}.K"], dx = nn.deconv1d_backward(x, p[f"blk{i}.K"], stride, dfull)
            if self.residual and stride == 1:
                dx = dx + dh
            dh = dx
        dpre0 = nn.leaky_relu_backward(pre0, dh.reshape(*pre0.shape), self.slope)
        grads["up.W"], grads["up.b"], dz = nn.dense_backward(p["up.W"], z, dpre0)
        dmse = mse_weight * scale * mse_exponent * np.abs(diff) ** (mse_exponent - 1) * np.sign(diff) / zb.shape[-1]
        dz = dz + dmse
        if self.batch_norm:
            for i, (_, _, bn, _) in enumerate(caches):
                _, _, mean, var = bn
                p.buffers[f"blk{i}.mean"] = (0.9 * p.buffers[f"blk{i}.mean"] + 0.1 * mean).astype(self.dtype)
                p.buffers[f"blk{i}.var"] = (0.9 * p.buffers[f"blk{i}.var"] + 0.1 * var).astype(self.dtype)
        return loss, ce_mean, grads, dz

    def train_step(self, z_input, target, z_true, lr, mse_weight=1.0, mse_exponent=2.0):
        loss, ce, grads, _ = self.loss_and_grads(z_input, target, z_true, mse_weight, mse_exponent)
        nn.rmsprop_step(self.params, grads, lr)
        return loss, ce

    def mean_ce(self, z_input, target, batch=64):
        """Mean summed cross-entropy over a set of (latent, string) pairs."""
        z_input = np.atleast_2d(np.asarray(z_input, dtype=self.dtype))
        classes = self._target_classes(target, z_input.shape[0])
        total = 0.0
        for s in range(0, z_input.shape[0], batch):
            logits, _ = self._forward(z_input[s:s + batch])
            total += float(nn.softmax_ce(logits, classes[s:s + batch]).sum())
        return total / z_input.shape[0]

    def generate(self, z, rng):
        """Sample one string per latent row."""
        return sample_string(self.forward(np.atleast_2d(z)), rng)

"""Small numpy neural-network substrate with hand-written backward passes.

Arrays are plain ``numpy.ndarray``; leading axes are treated as batch axes
wherever that makes sense. Campaign models run in float32, gradient checks
in float64 (the functions here are dtype-generic).
"""
from __future__ import annotations

import io
import json
import struct

import numba
import numpy as np

LEAKY_SLOPE = 0.2
RMS_DECAY = 0.9
RMS_EPS = 1e-8

CHECKPOINT_MAGIC = b"GNCK"
CHECKPOINT_VERSION = 1


class InstabilityError(FloatingPointError):
    """Raised when a loss, activation or gradient stops being finite."""


class ShapeError(ValueError):
    pass


def check_finite(x, what="tensor"):
    if not np.all(np.isfinite(x)):
        raise InstabilityError(f"non-finite values in {what}")
    return x


def glorot_uniform(rng, shape, fan_in, fan_out, dtype=np.float32):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


# ---------------------------------------------------------------------------
# layers

def dense_forward(weights, bias, x):
    """y = W x + b over the last axis of ``x``. ``weights`` is (out, in)."""
    weights = np.asarray(weights)
    x = np.asarray(x)
    if weights.ndim != 2 or bias.shape != (weights.shape[0],) or x.shape[-1] != weights.shape[1]:
        raise ShapeError(
            f"dense: W{weights.shape} b{np.shape(bias)} x{x.shape} do not agree")
    return x @ weights.T + bias


def dense_backward(weights, x, dy, need_dx=True):
    """Returns (dW, db, dx) for ``dense_forward``; dx is None if not needed."""
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    dw = dy2.T @ x2
    db = dy2.sum(axis=0)
    dx = dy @ weights if need_dx else None
    return dw, db, dx


def deconv1d_output_length(len_in, kernel_size, stride):
    return (len_in - 1) * stride + kernel_size


def deconv1d_forward(x, kernels, stride):
    """Transposed 1-D convolution.

    ``x`` is (..., len_in, C_in) and ``kernels`` is (k, C_in, C_out). Input
    position ``i`` scatters ``x[i] @ kernels[j]`` onto output position
    ``i*stride + j``; the output has ``(len_in - 1)*stride + k`` positions.
    """
    x = np.asarray(x)
    kernels = np.asarray(kernels)
    if stride not in (1, 2):
        raise ShapeError(f"stride must be 1 or 2, got {stride}")
    if kernels.ndim != 3 or kernels.shape[0] < 1:
        raise ShapeError(f"kernels must be (k, C_in, C_out), got {kernels.shape}")
    if x.ndim < 2 or x.shape[-1] != kernels.shape[1]:
        raise ShapeError(f"deconv1d: x{x.shape} vs kernels{kernels.shape}")
    k, c_in, c_out = kernels.shape
    len_in = x.shape[-2]
    lead = x.shape[:-2]
    taps = (x @ kernels.transpose(1, 0, 2).reshape(c_in, k * c_out))
    taps = taps.reshape(*lead, len_in, k, c_out)
    out = np.zeros((*lead, deconv1d_output_length(len_in, k, stride), c_out), dtype=taps.dtype)
    span = stride * (len_in - 1) + 1
    for j in range(k):
        out[..., j:j + span:stride, :] += taps[..., :, j, :]
    return out


def deconv1d_backward(x, kernels, stride, dy):
    """Returns (dkernels, dx) for ``deconv1d_forward``."""
    k, c_in, c_out = kernels.shape
    len_in = x.shape[-2]
    span = stride * (len_in - 1) + 1
    # gather the output gradient seen by every (input position, tap)
    dtaps = np.stack([dy[..., j:j + span:stride, :] for j in range(k)], axis=-2)
    x2 = x.reshape(-1, c_in)
    dtaps2 = dtaps.reshape(-1, k * c_out)
    dk = (x2.T @ dtaps2).reshape(c_in, k, c_out).transpose(1, 0, 2)
    dx = dtaps.reshape(*dtaps.shape[:-2], k * c_out) @ kernels.transpose(1, 0, 2).reshape(c_in, k * c_out).T
    return dk, dx


def leaky_relu(x, slope=LEAKY_SLOPE):
    return np.maximum(x, slope * x) if 0 <= slope <= 1 else np.where(x > 0, x, slope * x)


def leaky_relu_backward(x, dy, slope=LEAKY_SLOPE):
    return np.where(x > 0, dy, slope * dy)


def batch_norm_forward(x, gamma, beta, eps=1e-5):
    """Normalise every channel (last axis) over all other axes.

    Returns ``(y, cache)``; the cache feeds ``batch_norm_backward`` and also
    carries the batch mean/var for running statistics.
    """
    axes = tuple(range(x.ndim - 1))
    mean = x.mean(axis=axes)
    var = x.var(axis=axes)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv
    return xhat * gamma + beta, (xhat, inv, mean, var)


def batch_norm_inference(x, gamma, beta, mean, var, eps=1e-5):
    return (x - mean) / np.sqrt(var + eps) * gamma + beta


def batch_norm_backward(cache, gamma, dy):
    xhat, inv, _, _ = cache
    axes = tuple(range(dy.ndim - 1))
    m = dy.size // dy.shape[-1]
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * gamma
    dx = inv / m * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
    return dgamma, dbeta, dx


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax_ce(logits, target):
    """Cross-entropy of softmax(logits) against integer class ``target``.

    Works elementwise over leading axes: ``logits`` (..., C), ``target`` (...).
    Returns an array of shape (...) (a 0-d array for a single row).
    """
    logits = np.asarray(logits)
    target = np.asarray(target)
    n_classes = logits.shape[-1]
    if np.any(target < 0) or np.any(target >= n_classes):
        raise ValueError(f"target class out of range [0, {n_classes})")
    logp = log_softmax(logits)
    picked = np.take_along_axis(logp, target[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.maximum(-picked, 0.0)


def softmax_ce_backward(logits, target, dloss=1.0):
    """Gradient of ``softmax_ce`` w.r.t. the logits, scaled by ``dloss``."""
    grad = softmax(logits)
    np.put_along_axis(grad, target[..., None].astype(np.intp),
                      np.take_along_axis(grad, target[..., None].astype(np.intp), axis=-1) - 1.0,
                      axis=-1)
    return grad * np.asarray(dloss)[..., None]


def softmax_ce_and_grad(logits, target, dloss):
    """Fused ``softmax_ce`` and ``softmax_ce_backward`` (one exp pass)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    total = e.sum(axis=-1, keepdims=True)
    idx = target[..., None].astype(np.intp)
    loss = np.maximum(np.log(total[..., 0]) - np.take_along_axis(z, idx, axis=-1)[..., 0], 0.0)
    e /= total
    np.put_along_axis(e, idx, np.take_along_axis(e, idx, axis=-1) - 1.0, axis=-1)
    e *= np.asarray(dloss, dtype=e.dtype)[..., None]
    return loss, e


def kl_gauss(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over the last axis."""
    mu = np.asarray(mu)
    logvar = np.asarray(logvar)
    kl = -0.5 * np.sum(1.0 + logvar - mu ** 2 - np.exp(logvar), axis=-1)
    return np.maximum(kl, 0.0)


def kl_gauss_backward(mu, logvar, dloss=1.0):
    d = np.asarray(dloss)[..., None]
    return mu * d, 0.5 * (np.exp(logvar) - 1.0) * d


# ---------------------------------------------------------------------------
# parameters, optimiser, checkpoints

class ModelParameters:
    """Named trainable tensors, their RMSProp caches and non-trainable buffers."""

    def __init__(self, rng_seed=0):
        self.tensors: dict[str, np.ndarray] = {}
        self.cache: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.rng_seed = int(rng_seed)
        self.step = 0

    def add(self, name, value):
        if name in self.tensors:
            raise KeyError(f"duplicate parameter {name!r}")
        self.tensors[name] = value
        self.cache[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name):
        return self.tensors[name]

    def __iter__(self):
        return iter(self.tensors)

    def __len__(self):
        return len(self.tensors)

    def num_values(self):
        return sum(t.size for t in self.tensors.values())

    def copy(self):
        other = ModelParameters(self.rng_seed)
        other.tensors = {k: v.copy() for k, v in self.tensors.items()}
        other.cache = {k: v.copy() for k, v in self.cache.items()}
        other.buffers = {k: v.copy() for k, v in self.buffers.items()}
        other.step = self.step
        return other

    def astype(self, dtype):
        other = self.copy()
        for d in (other.tensors, other.cache, other.buffers):
            for k in d:
                d[k] = d[k].astype(dtype)
        return other

    def restore(self, snapshot):
        """Overwrite in place with the contents of ``snapshot``."""
        for d, src in ((self.tensors, snapshot.tensors), (self.cache, snapshot.cache),
                       (self.buffers, snapshot.buffers)):
            for k in d:
                d[k][...] = src[k]
        self.step = snapshot.step

    def digest(self):
        import hashlib
        h = hashlib.sha256()
        for name in sorted(self.tensors):
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.tensors[name]).tobytes())
        return h.hexdigest()

    def to_bytes(self):
        return checkpoint_bytes(self._named(), {"rng_seed": self.rng_seed, "step": self.step})

    def _named(self):
        named = {}
        for k in self.tensors:
            named["param/" + k] = self.tensors[k]
            named["cache/" + k] = self.cache[k]
        for k in self.buffers:
            named["buffer/" + k] = self.buffers[k]
        return named

    @classmethod
    def from_bytes(cls, blob):
        named, meta = read_checkpoint_bytes(blob)
        return cls._from_named(named, meta)

    @classmethod
    def _from_named(cls, named, meta):
        params = cls(meta.get("rng_seed", 0))
        params.step = int(meta.get("step", 0))
        for full, arr in named.items():
            kind, _, name = full.partition("/")
            if kind == "param":
                params.tensors[name] = arr
            elif kind == "cache":
                params.cache[name] = arr
            elif kind == "buffer":
                params.buffers[name] = arr
            else:
                raise ValueError(f"unknown tensor kind in checkpoint: {full!r}")
        if set(params.tensors) != set(params.cache):
            raise ValueError("checkpoint: optimiser state does not match parameters")
        return params


def checkpoint_bytes(named, meta):
    """Serialise named float tensors as a self-describing little-endian blob.

    Layout: magic ``GNCK``, u32 version, u32 header length, UTF-8 JSON header
    (sorted keys; tensor names, shapes, byte offsets, metadata), then the raw
    float32 data of every tensor in header order.
    """
    entries = []
    payload = io.BytesIO()
    for name, arr in named.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "offset": payload.tell(),
                        "nbytes": len(data)})
        payload.write(data)
    header = json.dumps({"tensors": entries, "meta": meta}, sort_keys=True,
                        separators=(",", ":")).encode()
    return CHECKPOINT_MAGIC + struct.pack("<II", CHECKPOINT_VERSION, len(header)) + header + payload.getvalue()


def read_checkpoint_bytes(blob):
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a checkpoint (bad magic)")
    version, hlen = struct.unpack("<II", blob[4:12])
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[12:12 + hlen])
    base = 12 + hlen
    named = {}
    for e in header["tensors"]:
        start = base + e["offset"]
        raw = blob[start:start + e["nbytes"]]
        if len(raw) != e["nbytes"]:
            raise ValueError(f"checkpoint truncated in tensor {e['name']!r}")
        named[e["name"]] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(e["shape"])
    return named, header["meta"]


def rmsprop_step(params, grads, lr, decay=RMS_DECAY, eps=RMS_EPS):
    """One RMSProp update, in place. Aborts untouched on a non-finite gradient."""
    for name, g in grads.items():
        if name not in params.tensors:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != params.tensors[name].shape:
            raise ShapeError(f"gradient {name!r}: {g.shape} != {params.tensors[name].shape}")
        if not np.all(np.isfinite(g)):
            raise InstabilityError(f"non-finite gradient for {name!r}")
    for name, g in grads.items():
        theta = params.tensors[name]
        dt = theta.dtype.type
        _rmsprop_kernel(theta.reshape(-1), params.cache[name].reshape(-1),
                        np.ascontiguousarray(g, dtype=theta.dtype).reshape(-1),
                        dt(lr), dt(decay), dt(1.0 - decay), dt(eps))
    params.step += 1
    return params


@numba.njit(cache=True, fastmath=True)
def _rmsprop_kernel(theta, cache, g, lr, decay, keep, eps):
    for i in range(theta.size):
        c = decay * cache[i] + keep * g[i] * g[i]
        cache[i] = c
        theta[i] -= lr * g[i] / (np.sqrt(c) + eps)


# ---------------------------------------------------------------------------
# gradient verification

def grad_check(loss_and_grads, tensors, h=1e-4, floor=1e-7, loss=None, pattern=None):
    """Worst relative error between analytic and central-difference gradients.

    ``loss_and_grads()`` evaluates the loss at the current contents of
    ``tensors`` (a name -> float64 array mapping, perturbed in place) and
    returns ``(loss, grads)``; ``loss()`` may be given as a cheaper
    loss-only evaluation for the perturbed points. The relative error of one
    coordinate is ``|a - n| / max(|a| + |n|, floor)``.

    Piecewise-linear activations make the central difference meaningless
    when a perturbation moves a unit across its kink. If ``pattern()`` is
    given (it should return the activation sign pattern at the current
    point, e.g. packed booleans), coordinates whose +h or -h evaluation
    changes the pattern are skipped; see ``grad_check_report`` for counts.
    """
    return grad_check_report(loss_and_grads, tensors, h, floor, loss, pattern)[0]


def grad_check_report(loss_and_grads, tensors, h=1e-4, floor=1e-7, loss=None, pattern=None):
    """``grad_check`` returning ``(worst, n_checked, n_skipped)``."""
    _, analytic = loss_and_grads()
    analytic = {k: np.array(v, dtype=np.float64) for k, v in analytic.items()}
    if loss is None:
        loss = lambda: loss_and_grads()[0]  # noqa: E731
    base = pattern() if pattern is not None else None
    worst, checked, skipped = 0.0, 0, 0
    for name, arr in tensors.items():
        flat = arr.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss())
            kinked = pattern is not None and pattern() != base
            flat[i] = orig - h
            down = float(loss())
            kinked = kinked or (pattern is not None and pattern() != base)
            flat[i] = orig
            if kinked:
                skipped += 1
                continue
            numeric = (up - down) / (2 * h)
            err = abs(a_flat[i] - numeric) / max(abs(a_flat[i]) + abs(numeric), floor)
            worst = max(worst, err)
            checked += 1
    return worst, checked, skipped

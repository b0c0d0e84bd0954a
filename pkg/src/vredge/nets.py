"""Dense network stack sized for DDPG: MLP forward/backward, Adam-style
optimizer, Polyak target updates, checkpointing.

No autodiff graph; backward is hand-rolled reverse mode over the cached
forward pass and returns both parameter gradients and the gradient with
respect to the input (the critic-to-actor path needs d Q / d action).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

CHECKPOINT_VERSION = 1


class DimensionMismatch(ValueError):
    pass


class NonFiniteGradient(RuntimeError):
    pass


class CorruptCheckpoint(ValueError):
    pass


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class MlpSpec:
    widths: tuple               # (input, hidden..., output)
    out_act: str = "identity"   # "identity" (critic) or "sigmoid" (actor)
    final_scale: float = 1.0    # shrink factor for the output layer init

    def __post_init__(self):
        if len(self.widths) < 2:
            raise ValueError("need at least input and output widths")
        if any(w <= 0 for w in self.widths):
            raise ValueError("layer widths must be positive")
        if self.out_act not in ("identity", "sigmoid"):
            raise ValueError(f"unknown output activation {self.out_act!r}")


def mlp_spec(in_dim, out_dim, hidden_width, hidden_layers, out_act,
             final_scale=1.0):
    widths = (in_dim,) + (hidden_width,) * hidden_layers + (out_dim,)
    return MlpSpec(widths, out_act, final_scale)


class Mlp:
    """Rectifier MLP with cached forward and exact reverse-mode backward."""

    def __init__(self, spec: MlpSpec, rng=None):
        self.spec = spec
        self.weights = []
        self.biases = []
        if rng is not None:
            for li, (n_in, n_out) in enumerate(zip(spec.widths, spec.widths[1:])):
                bound = 1.0 / np.sqrt(n_in)
                if li == len(spec.widths) - 2:
                    bound *= spec.final_scale
                self.weights.append(rng.uniform(-bound, bound, (n_in, n_out)))
                self.biases.append(rng.uniform(-bound, bound, n_out))
        else:
            for n_in, n_out in zip(spec.widths, spec.widths[1:]):
                self.weights.append(np.zeros((n_in, n_out)))
                self.biases.append(np.zeros(n_out))
        self._inputs = None     # per-layer activations cached by forward
        self._pre = None        # per-layer pre-activations

    @property
    def n_layers(self):
        return len(self.weights)

    def forward(self, x, cache=False):
        """Batch forward; x is (B, in) or (in,). Caches for backward."""
        a = np.atleast_2d(np.asarray(x, dtype=float))
        if a.shape[1] != self.spec.widths[0]:
            raise DimensionMismatch(
                f"input width {a.shape[1]} != {self.spec.widths[0]}")
        inputs, pre = [], []
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            inputs.append(a)
            z = a @ w + b
            pre.append(z)
            if li < self.n_layers - 1:
                a = np.maximum(z, 0.0)
            elif self.spec.out_act == "sigmoid":
                a = _sigmoid(z)
            else:
                a = z
        if cache:
            self._inputs, self._pre, self._out = inputs, pre, a
        return a

    def backward(self, upstream, sample_weights=None):
        """Gradients for the loss whose per-output derivative is `upstream`.

        Needs a preceding forward(..., cache=True). Returns (grads, dx)
        where grads is a list of (dW, db) matching the layers and dx is
        the gradient w.r.t. the network input (B, in). No averaging is
        applied here; fold 1/B into `upstream` or `sample_weights`.
        """
        if self._inputs is None:
            raise RuntimeError("backward before cached forward")
        g = np.atleast_2d(np.asarray(upstream, dtype=float))
        if g.shape != self._out.shape:
            raise DimensionMismatch(
                f"upstream shape {g.shape} != output {self._out.shape}")
        if sample_weights is not None:
            g = g * np.asarray(sample_weights, dtype=float)[:, None]
        grads = [None] * self.n_layers
        for li in range(self.n_layers - 1, -1, -1):
            z = self._pre[li]
            if li == self.n_layers - 1:
                if self.spec.out_act == "sigmoid":
                    s = _sigmoid(z)
                    dz = g * s * (1.0 - s)
                else:
                    dz = g
            else:
                dz = g * (z > 0.0)
            grads[li] = (self._inputs[li].T @ dz, dz.sum(axis=0))
            g = dz @ self.weights[li].T
        return grads, g

    # --- parameter plumbing ----------------------------------------------

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self):
        twin = Mlp(self.spec)
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def arrays(self, prefix=""):
        out = {}
        for li, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}W{li}"] = w
            out[f"{prefix}b{li}"] = b
        return out

    @classmethod
    def from_arrays(cls, spec: MlpSpec, data, prefix=""):
        net = cls(spec)
        try:
            net.weights = [np.array(data[f"{prefix}W{li}"])
                           for li in range(len(spec.widths) - 1)]
            net.biases = [np.array(data[f"{prefix}b{li}"])
                          for li in range(len(spec.widths) - 1)]
        except KeyError as err:
            raise CorruptCheckpoint(f"missing parameter array {err}") from None
        for li, (n_in, n_out) in enumerate(zip(spec.widths, spec.widths[1:])):
            if net.weights[li].shape != (n_in, n_out) or \
                    net.biases[li].shape != (n_out,):
                raise CorruptCheckpoint(f"layer {li} shape mismatch")
        return net

    def to_bytes(self):
        buf = io.BytesIO()
        meta = dict(version=CHECKPOINT_VERSION,
                    widths=np.array(self.spec.widths),
                    out_act=self.spec.out_act,
                    final_scale=self.spec.final_scale)
        np.savez(buf, **meta, **self.arrays())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, blob):
        try:
            with np.load(io.BytesIO(blob), allow_pickle=False) as z:
                if int(z["version"]) != CHECKPOINT_VERSION:
                    raise CorruptCheckpoint(f"version {z['version']} unsupported")
                spec = MlpSpec(tuple(int(w) for w in z["widths"]),
                               str(z["out_act"]), float(z["final_scale"]))
                return cls.from_arrays(spec, z)
        except CorruptCheckpoint:
            raise
        except Exception as err:
            raise CorruptCheckpoint(f"unreadable network blob: {err}") from None

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


class Adam:
    """Adaptive-moment optimizer over a list of parameter arrays."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, params, grads):
        """In-place update; refuses (raises) on any non-finite gradient."""
        if len(params) != len(self.m):
            raise DimensionMismatch("optimizer state does not match params")
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient("non-finite gradient, step aborted")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def arrays(self, prefix=""):
        out = {f"{prefix}t": np.array(self.t)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}m{i}"] = m
            out[f"{prefix}v{i}"] = v
        return out

    def restore(self, data, prefix=""):
        try:
            self.t = int(data[f"{prefix}t"])
            self.m = [np.array(data[f"{prefix}m{i}"]) for i in range(len(self.m))]
            self.v = [np.array(data[f"{prefix}v{i}"]) for i in range(len(self.v))]
        except KeyError as err:
            raise CorruptCheckpoint(f"missing optimizer array {err}") from None


def grad_list(grads):
    """Flatten backward()'s [(dW, db), ...] into the params() ordering."""
    out = []
    for dw, db in grads:
        out.extend((dw, db))
    return out


def soft_update(target: Mlp, source: Mlp, tau):
    """Polyak blend: target <- tau*source + (1-tau)*target, elementwise."""
    if target.spec.widths != source.spec.widths:
        raise DimensionMismatch("target/source layer widths differ")
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    for tw, sw in zip(target.weights, source.weights):
        tw *= 1.0 - tau
        tw += tau * sw
    for tb, sb in zip(target.biases, source.biases):
        tb *= 1.0 - tau
        tb += tau * sb

"""Small recurrent networks with hand-written backpropagation through time.

A :class:`RecurrentNet` is an optional linear input embedding, a recurrent
encoder (GRU, Elman or none), an optional embedded side input concatenated
to the encoder output, and a feedforward head with a linear readout::

    x_t -> [embed] -> encoder -> h_t -+-> MLP -> y_t
                       side_t -> [embed] -+

Everything runs in float64.  Parameters live in a :class:`ParamStore` so the
whole network can be viewed as one flat vector for gradient checks.
"""

from __future__ import annotations

import base64
import json
from dataclasses import asdict, dataclass, field

import numpy as np

CHECKPOINT_FORMAT = "iaac-checkpoint/1"


class ParamStore:
    """Ordered collection of named float64 arrays with fixed shapes."""

    def __init__(self):
        self._arrays: dict[str, np.ndarray] = {}

    def add(self, name: str, array: np.ndarray) -> np.ndarray:
        if name in self._arrays:
            raise KeyError(f"duplicate parameter {name!r}")
        self._arrays[name] = np.array(array, dtype=np.float64)
        return self._arrays[name]

    def __getitem__(self, name: str) -> np.ndarray:
        return self._arrays[name]

    def __contains__(self, name) -> bool:
        return name in self._arrays

    def __iter__(self):
        return iter(self._arrays)

    def items(self):
        return self._arrays.items()

    @property
    def size(self) -> int:
        return sum(a.size for a in self._arrays.values())

    def shapes(self) -> dict:
        return {k: v.shape for k, v in self._arrays.items()}

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self._arrays.values()])

    def set_flat(self, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (self.size,):
            raise ValueError("flat vector has the wrong size")
        k = 0
        for a in self._arrays.values():
            a[...] = vector[k:k + a.size].reshape(a.shape)
            k += a.size

    def flatten(self, grads: dict) -> np.ndarray:
        return np.concatenate([grads[k].ravel() for k in self._arrays])

    def zeros(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self._arrays.items()}

    def copy_from(self, other: "ParamStore") -> None:
        if other.shapes() != self.shapes():
            raise ValueError("parameter stores have different layouts")
        for k, a in self._arrays.items():
            a[...] = other[k]

    def apply(self, grads: dict, lr: float) -> None:
        for k, a in self._arrays.items():
            a -= lr * grads[k]
        self.check_finite()

    def check_finite(self) -> None:
        for k, a in self._arrays.items():
            if not np.all(np.isfinite(a)):
                raise FloatingPointError(f"non-finite values in parameter {k!r}")


# --------------------------------------------------------------------------
# Layers
# --------------------------------------------------------------------------


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class Linear:
    def __init__(self, store, name, n_in, n_out, rng, bias=True):
        self.W = store.add(f"{name}.W", _uniform(rng, n_in, (n_in, n_out)))
        self.b = store.add(f"{name}.b", np.zeros(n_out)) if bias else None
        self.name = name

    def forward(self, x):
        y = x @ self.W
        return (y + self.b if self.b is not None else y), x

    def backward(self, x, dy, grads):
        grads[f"{self.name}.W"] += x.T @ dy
        if self.b is not None:
            grads[f"{self.name}.b"] += dy.sum(axis=0)
        return dy @ self.W.T


class Elman:
    """``h_t = tanh(x_t Wx + h_{t-1} Wh + b)``."""

    def __init__(self, store, name, n_in, hidden, rng):
        self.name = name
        self.hidden = hidden
        self.Wx = store.add(f"{name}.Wx", _uniform(rng, n_in, (n_in, hidden)))
        self.Wh = store.add(f"{name}.Wh", _uniform(rng, hidden, (hidden, hidden)))
        self.b = store.add(f"{name}.b", np.zeros(hidden))

    def step(self, x, h):
        return np.tanh(x @ self.Wx + h @ self.Wh + self.b)

    def forward(self, x):
        pre = x @ self.Wx + self.b
        H = np.empty((len(x), self.hidden))
        h = np.zeros(self.hidden)
        for t in range(len(x)):
            h = np.tanh(pre[t] + h @ self.Wh)
            H[t] = h
        return H, (x, H)

    def backward(self, cache, dH, grads):
        x, H = cache
        T = len(x)
        dpre = np.empty_like(H)
        dh_next = np.zeros(self.hidden)
        for t in range(T - 1, -1, -1):
            da = (dH[t] + dh_next) * (1.0 - H[t] ** 2)
            dpre[t] = da
            dh_next = da @ self.Wh.T
        grads[f"{self.name}.Wh"] += H[:-1].T @ dpre[1:]
        grads[f"{self.name}.Wx"] += x.T @ dpre
        grads[f"{self.name}.b"] += dpre.sum(axis=0)
        return dpre @ self.Wx.T


class GRU:
    """Gated recurrent unit with the reset gate applied before the candidate matmul.

    ``z = s(x Wz + h Uz + bz)``, ``r = s(x Wr + h Ur + br)``,
    ``n = tanh(x Wn + (r*h) Un + bn)``, ``h' = (1 - z) * n + z * h``.
    """

    def __init__(self, store, name, n_in, hidden, rng):
        self.name = name
        self.hidden = hidden
        self.Wx = store.add(f"{name}.Wx", _uniform(rng, n_in, (n_in, 3 * hidden)))
        self.Wh = store.add(f"{name}.Wh", _uniform(rng, hidden, (hidden, 3 * hidden)))
        self.b = store.add(f"{name}.b", np.zeros(3 * hidden))

    def _cell(self, pre, h):
        H = self.hidden
        zr = _sigmoid(pre[:2 * H] + h @ self.Wh[:, :2 * H])
        z, r = zr[:H], zr[H:]
        n = np.tanh(pre[2 * H:] + (r * h) @ self.Wh[:, 2 * H:])
        return (1.0 - z) * n + z * h, z, r, n

    def step(self, x, h):
        return self._cell(x @ self.Wx + self.b, h)[0]

    def forward(self, x):
        T, H = len(x), self.hidden
        pre = x @ self.Wx + self.b
        hs = np.zeros((T + 1, H))
        gates = np.empty((T, 3, H))
        for t in range(T):
            hs[t + 1], gates[t, 0], gates[t, 1], gates[t, 2] = self._cell(pre[t], hs[t])
        return hs[1:], (x, hs, gates)

    def backward(self, cache, dH, grads):
        x, hs, gates = cache
        T, H = len(x), self.hidden
        Uzr, Un = self.Wh[:, :2 * H], self.Wh[:, 2 * H:]
        dpre = np.empty((T, 3 * H))
        dh_next = np.zeros(H)
        for t in range(T - 1, -1, -1):
            h = hs[t]
            z, r, n = gates[t]
            dh_out = dH[t] + dh_next
            dz = dh_out * (h - n)
            dan = dh_out * (1.0 - z) * (1.0 - n * n)
            drh = dan @ Un.T
            dzr = np.concatenate([dz * z * (1.0 - z), drh * h * r * (1.0 - r)])
            dh_next = dh_out * z + drh * r + dzr @ Uzr.T
            dpre[t, :2 * H] = dzr
            dpre[t, 2 * H:] = dan
        dWh = grads[f"{self.name}.Wh"]
        dWh[:, :2 * H] += hs[:-1].T @ dpre[:, :2 * H]
        dWh[:, 2 * H:] += (gates[:, 1] * hs[:-1]).T @ dpre[:, 2 * H:]
        grads[f"{self.name}.Wx"] += x.T @ dpre
        grads[f"{self.name}.b"] += dpre.sum(axis=0)
        return dpre @ self.Wx.T


ACTIVATIONS = {
    "relu": (lambda x: np.maximum(x, 0.0), lambda y: (y > 0).astype(np.float64)),
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
}


# --------------------------------------------------------------------------
# Network
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NetSpec:
    input_dim: int
    output_dim: int | None = 1
    encoder: str = "gru"
    hidden_dim: int = 128
    embed_dim: int | None = None
    side_dim: int = 0
    side_embed_dim: int | None = None
    head: tuple = ()
    activation: str = "relu"

    def __post_init__(self):
        if self.encoder not in ("gru", "elman", "none"):
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        widths = [self.input_dim, self.hidden_dim, *self.head]
        widths += [w for w in (self.output_dim, self.embed_dim, self.side_embed_dim) if w is not None]
        if any(int(w) < 1 for w in widths) or self.side_dim < 0:
            raise ValueError("widths must be >= 1")
        object.__setattr__(self, "head", tuple(int(w) for w in self.head))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["head"] = list(self.head)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetSpec":
        d = dict(d)
        d["head"] = tuple(d.get("head", ()))
        return cls(**d)


class RecurrentNet:
    def __init__(self, spec: NetSpec, rng: np.random.Generator | int = 0):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.spec = spec
        self.params = ParamStore()
        width = spec.input_dim
        self.embed = None
        if spec.embed_dim is not None:
            self.embed = Linear(self.params, "embed", width, spec.embed_dim, rng, bias=False)
            width = spec.embed_dim
        self.encoder = None
        if spec.encoder == "gru":
            self.encoder = GRU(self.params, "gru", width, spec.hidden_dim, rng)
            width = spec.hidden_dim
        elif spec.encoder == "elman":
            self.encoder = Elman(self.params, "elman", width, spec.hidden_dim, rng)
            width = spec.hidden_dim
        self.feature_dim = width
        self.side_embed = None
        if spec.side_dim:
            side_width = spec.side_dim
            if spec.side_embed_dim is not None:
                self.side_embed = Linear(self.params, "side_embed", spec.side_dim,
                                         spec.side_embed_dim, rng, bias=False)
                side_width = spec.side_embed_dim
            width += side_width
        self.layers = []
        for k, w in enumerate(spec.head):
            self.layers.append(Linear(self.params, f"head{k}", width, w, rng))
            width = w
        self.readout = None
        if spec.output_dim is not None:
            self.readout = Linear(self.params, "out", width, spec.output_dim, rng)
        self.act, self.dact = ACTIVATIONS[spec.activation]

    # -- forward -----------------------------------------------------------

    def _check(self, inputs, side):
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim != 2 or inputs.shape[1] != self.spec.input_dim:
            raise ValueError(f"inputs must have shape (T, {self.spec.input_dim}), got {inputs.shape}")
        if self.spec.side_dim:
            if side is None:
                raise ValueError("network expects a side input")
            side = np.asarray(side, dtype=np.float64)
            if side.shape != (len(inputs), self.spec.side_dim):
                raise ValueError(f"side input must have shape ({len(inputs)}, {self.spec.side_dim})")
        elif side is not None and np.size(side):
            raise ValueError("network takes no side input")
        return inputs, side

    def forward(self, inputs, side=None):
        """Return ``(hidden, outputs, cache)`` for a whole sequence from a zero state."""
        x, side = self._check(inputs, side)
        cache = {}
        if self.embed is not None:
            x, cache["embed"] = self.embed.forward(x)
        if self.encoder is not None:
            hidden, cache["encoder"] = self.encoder.forward(x)
        else:
            hidden = x
        feats = hidden
        if self.spec.side_dim:
            s = side
            if self.side_embed is not None:
                s, cache["side_embed"] = self.side_embed.forward(side)
            feats = np.concatenate([hidden, s], axis=1)
        acts = []
        for layer in self.layers:
            pre, inp = layer.forward(feats)
            feats = self.act(pre)
            acts.append((inp, feats))
        cache["head"] = acts
        if self.readout is not None:
            out, cache["out"] = self.readout.forward(feats)
        else:
            out = feats
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite network output")
        return hidden, out, cache

    def backward(self, cache, d_outputs) -> dict:
        """Exact gradient of ``sum(d_outputs * outputs)`` w.r.t. every parameter."""
        grads = self.params.zeros()
        d = np.asarray(d_outputs, dtype=np.float64)
        if self.readout is not None:
            d = self.readout.backward(cache["out"], d, grads)
        for layer, (inp, y) in zip(reversed(self.layers), reversed(cache["head"])):
            d = layer.backward(inp, d * self.dact(y), grads)
        if self.spec.side_dim:
            d_side = d[:, self.feature_dim:]
            d = d[:, :self.feature_dim]
            if self.side_embed is not None:
                self.side_embed.backward(cache["side_embed"], d_side, grads)
        if self.encoder is not None:
            d = self.encoder.backward(cache["encoder"], d, grads)
        if self.embed is not None:
            self.embed.backward(cache["embed"], d, grads)
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {k!r}")
        return grads

    # -- incremental -------------------------------------------------------

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.spec.hidden_dim if self.encoder is not None else 0)

    def step(self, x, h, side=None):
        """One step of the recurrence for acting online; returns ``(h, output)``."""
        x = np.asarray(x, dtype=np.float64)
        if self.embed is not None:
            x = x @ self.embed.W
        h = self.encoder.step(x, h) if self.encoder is not None else x
        feats = h
        if self.spec.side_dim:
            s = np.asarray(side, dtype=np.float64)
            if self.side_embed is not None:
                s = s @ self.side_embed.W
            feats = np.concatenate([h, s])
        for layer in self.layers:
            feats = self.act(feats @ layer.W + layer.b)
        out = feats @ self.readout.W + self.readout.b if self.readout is not None else feats
        return (h if self.encoder is not None else self.initial_state()), out

    def copy(self) -> "RecurrentNet":
        other = RecurrentNet(self.spec, 0)
        other.params.copy_from(self.params)
        return other


def forward_sequence(net: RecurrentNet, inputs, side=None):
    """``(hidden states, outputs)`` for a sequence; the initial hidden state is zero."""
    hidden, out, _ = net.forward(inputs, side)
    return hidden, out


def bptt_gradient(net: RecurrentNet, loss_fn, inputs, side=None) -> np.ndarray:
    """Flat gradient of ``loss_fn(outputs)``, which must return ``(loss, d_loss/d_outputs)``."""
    _, out, cache = net.forward(inputs, side)
    loss, d_out = loss_fn(out)
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    return net.params.flatten(net.backward(cache, d_out))


def finite_difference_gradient(f, x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function of a flat vector."""
    x = np.array(x, dtype=np.float64)
    g = np.empty_like(x)
    for k in range(x.size):
        old = x[k]
        x[k] = old + eps
        fp = f(x)
        x[k] = old - eps
        fm = f(x)
        x[k] = old
        g[k] = (fp - fm) / (2 * eps)
    return g


def relative_error(a, b, floor: float = 1e-8) -> float:
    """Worst coordinate of ``|a - b| / (|a| + |b|)``.

    Coordinates smaller than ``floor`` are compared against ``floor`` instead,
    since central differences cannot resolve them relatively.
    """
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)))


# --------------------------------------------------------------------------
# Categorical head
# --------------------------------------------------------------------------


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass
class Categorical:
    """Softmax distribution over the last axis of ``logits``."""

    logits: np.ndarray
    log_probs: np.ndarray = field(init=False)
    probs: np.ndarray = field(init=False)

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if not np.all(np.isfinite(self.logits)):
            raise FloatingPointError("non-finite logits")
        self.log_probs = log_softmax(self.logits)
        self.probs = np.exp(self.log_probs)

    def sample(self, rng: np.random.Generator):
        if self.probs.ndim == 1:
            return int(rng.choice(len(self.probs), p=self.probs / self.probs.sum()))
        u = rng.uniform(size=self.probs.shape[:-1] + (1,))
        return (np.cumsum(self.probs, axis=-1) < u).sum(axis=-1)

    def log_prob(self, actions):
        if self.log_probs.ndim == 1:
            return float(self.log_probs[int(actions)])
        return np.take_along_axis(self.log_probs, np.asarray(actions)[..., None], axis=-1)[..., 0]

    def entropy(self):
        return -(self.probs * self.log_probs).sum(axis=-1)

    def grad_log_prob(self, actions) -> np.ndarray:
        """d log p(a) / d logits."""
        g = -self.probs.copy()
        if g.ndim == 1:
            g[int(actions)] += 1.0
        else:
            np.put_along_axis(g, np.asarray(actions)[..., None],
                              np.take_along_axis(g, np.asarray(actions)[..., None], -1) + 1.0, -1)
        return g

    def grad_entropy(self) -> np.ndarray:
        """d H / d logits."""
        H = self.entropy()
        return -self.probs * (self.log_probs + np.asarray(H)[..., None])


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------


def _encode_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "dtype": "<f8",
            "data": base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")}


def _decode_array(d: dict) -> np.ndarray:
    if d["dtype"] != "<f8":
        raise ValueError(f"unsupported dtype {d['dtype']!r}")
    raw = np.frombuffer(base64.b64decode(d["data"]), dtype="<f8")
    return raw.reshape(d["shape"]).astype(np.float64)


def checkpoint_document(nets: dict, step: int, extra: dict | None = None) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "step": int(step),
        "nets": {name: {"spec": net.spec.to_dict(),
                        "arrays": {k: _encode_array(v) for k, v in net.params.items()}}
                 for name, net in nets.items()},
        "extra": extra or {},
    }


def nets_from_document(doc: dict) -> dict:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    nets = {}
    for name, entry in doc["nets"].items():
        net = RecurrentNet(NetSpec.from_dict(entry["spec"]), 0)
        for k, arr in entry["arrays"].items():
            value = _decode_array(arr)
            if value.shape != net.params[k].shape:
                raise ValueError(f"shape mismatch for {name}.{k}")
            net.params[k][...] = value
        nets[name] = net
    return nets


def save_checkpoint(path, nets: dict, step: int, extra: dict | None = None) -> None:
    with open(path, "w") as f:
        json.dump(checkpoint_document(nets, step, extra), f, sort_keys=True)


def load_checkpoint(path):
    """Return ``(nets, step, extra)``."""
    with open(path) as f:
        doc = json.load(f)
    return nets_from_document(doc), doc["step"], doc["extra"]

"""Dense MLPs with hand-written backprop and an Adam optimizer, in float64."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from slice_reserve.rng import SeededStream

CHECKPOINT_FORMAT = "slice-reserve-mlp/1"


@dataclass(frozen=True)
class MlpSpec:
    layer_sizes: tuple[int, ...]
    hidden_activation: str = "relu"
    output_activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(int(n) for n in self.layer_sizes))
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise ValueError(f"bad layer sizes {self.layer_sizes}")
        if self.hidden_activation != "relu":
            raise ValueError("hidden_activation must be 'relu'")
        if self.output_activation not in ("tanh", "identity"):
            raise ValueError("output_activation must be 'tanh' or 'identity'")

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def to_dict(self) -> dict:
        return {"layer_sizes": list(self.layer_sizes), "hidden_activation": self.hidden_activation,
                "output_activation": self.output_activation}


@dataclass
class ParameterSet:
    weights: list[np.ndarray]  # layer k: (fan_in, fan_out)
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def copy(self) -> "ParameterSet":
        return ParameterSet([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "ParameterSet":
        return ParameterSet([np.zeros_like(w) for w in self.weights], [np.zeros_like(b) for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def check(self, spec: MlpSpec) -> None:
        if len(self.weights) != spec.n_layers or len(self.biases) != spec.n_layers:
            raise ValueError("parameter layer count does not match spec")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            want = (spec.layer_sizes[k], spec.layer_sizes[k + 1])
            if w.shape != want or b.shape != (want[1],):
                raise ValueError(f"layer {k}: shapes {w.shape}/{b.shape}, expected {want}/{(want[1],)}")


def init_params(spec: MlpSpec, stream: SeededStream, final_scale: float = 3e-3) -> ParameterSet:
    """Fan-in uniform weights, small uniform final layer, zero biases."""
    ws, bs = [], []
    for k in range(spec.n_layers):
        fan_in, fan_out = spec.layer_sizes[k], spec.layer_sizes[k + 1]
        bound = final_scale if k == spec.n_layers - 1 else 1.0 / np.sqrt(fan_in)
        ws.append(stream.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return ParameterSet(ws, bs)


def _as_batch(x, width: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != width:
        raise ValueError(f"input has shape {x.shape}, expected (..., {width})")
    return x2, single


def forward(params: ParameterSet, spec: MlpSpec, x, return_cache: bool = False):
    """Evaluate the network on one vector or a (batch, in) array."""
    h, single = _as_batch(x, spec.layer_sizes[0])
    acts = [h]
    last = spec.n_layers - 1
    for k, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if k < last:
            h = np.maximum(z, 0.0)
        elif spec.output_activation == "tanh":
            h = np.tanh(z)
        else:
            h = z
        acts.append(h)
    out = h[0] if single else h
    return (out, acts) if return_cache else out


def backward(params: ParameterSet, spec: MlpSpec, x, upstream, cache=None):
    """Gradients of ``sum(upstream * forward(x))`` w.r.t. parameters and input.

    For batched input the parameter gradients are summed over the batch.
    """
    x2, single = _as_batch(x, spec.layer_sizes[0])
    g = np.asarray(upstream, dtype=float)
    g = g[None, :] if g.ndim == 1 else g
    if g.shape != (x2.shape[0], spec.layer_sizes[-1]):
        raise ValueError(f"upstream gradient has shape {g.shape}, expected {(x2.shape[0], spec.layer_sizes[-1])}")
    if cache is None:
        _, cache = forward(params, spec, x2, return_cache=True)
    acts = cache
    last = spec.n_layers - 1
    gw = [None] * spec.n_layers
    gb = [None] * spec.n_layers
    for k in range(last, -1, -1):
        out = acts[k + 1]
        if k < last:
            g = g * (out > 0.0)
        elif spec.output_activation == "tanh":
            g = g * (1.0 - out * out)
        gw[k] = acts[k].T @ g
        gb[k] = g.sum(axis=0)
        g = g @ params.weights[k].T
    grad_in = g[0] if single else g
    return ParameterSet(gw, gb), grad_in


@dataclass
class OptimizerState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: ParameterSet, learning_rate: float, **kw) -> "OptimizerState":
        arrays = params.arrays()
        return cls(learning_rate, m=[np.zeros_like(a) for a in arrays], v=[np.zeros_like(a) for a in arrays], **kw)


def optimizer_step(state: OptimizerState, params: ParameterSet, grads: ParameterSet) -> ParameterSet:
    """Bias-corrected Adam update, applied in place; returns ``params``."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    lr = state.learning_rate
    for p, g, m, v in zip(params.arrays(), grads.arrays(), state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params


def soft_update(target: ParameterSet, online: ParameterSet, tau: float) -> None:
    """``target <- tau * online + (1 - tau) * target`` in place."""
    for t, o in zip(target.arrays(), online.arrays()):
        t *= 1.0 - tau
        t += tau * o


# ----------------------------------------------------------------------------
# checkpoints: JSON with the layer layout as header; floats round-trip exactly via repr


def params_to_dict(spec: MlpSpec, params: ParameterSet) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "spec": spec.to_dict(),
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }


def params_from_dict(d: dict) -> tuple[MlpSpec, ParameterSet]:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {d.get('format')!r}")
    s = d["spec"]
    spec = MlpSpec(tuple(s["layer_sizes"]), s["hidden_activation"], s["output_activation"])
    params = ParameterSet([np.array(w, dtype=float).reshape(spec.layer_sizes[k], spec.layer_sizes[k + 1])
                           for k, w in enumerate(d["weights"])],
                          [np.array(b, dtype=float) for b in d["biases"]])
    params.check(spec)
    return spec, params


def save_params(path, spec: MlpSpec, params: ParameterSet, extra: dict | None = None) -> None:
    d = params_to_dict(spec, params)
    if extra:
        d["meta"] = extra
    Path(path).write_text(json.dumps(d), encoding="utf-8")


def load_params(path) -> tuple[MlpSpec, ParameterSet, dict]:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    spec, params = params_from_dict(d)
    return spec, params, d.get("meta", {})

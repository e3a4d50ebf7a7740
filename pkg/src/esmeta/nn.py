"""Fixed-architecture MLP actor and critic with hand-derived backward passes.

Network parameters live in flat float64 vectors so the evolution-strategy
layer can treat a whole network as a point in R^n. Flat layout: for each
layer in order, the weight matrix W (output_dim x input_dim, row-major)
followed by the bias vector. The critic concatenates the action onto the
input of one designated layer; that layer's input_dim already includes the
action width.

No autodiff framework is used: the backward passes are derived per
activation and checked against finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from esmeta.errors import NumericFailure

RELU = "relu"
TANH = "tanh"
IDENTITY = "identity"
_ACTIVATIONS = (RELU, TANH, IDENTITY)


@dataclass(frozen=True)
class LayerSpec:
    input_dim: int
    output_dim: int
    activation: str

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(
                f"layer dims must be >= 1, got {self.input_dim}x{self.output_dim}"
            )
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_params(self) -> int:
        return self.input_dim * self.output_dim + self.output_dim


@dataclass(frozen=True)
class NetLayout:
    layers: tuple[LayerSpec, ...]
    critic_action_injection: int | None = None

    def __post_init__(self):
        if not self.layers:
            raise ValueError("layout needs at least one layer")
        inj = self.critic_action_injection
        if inj is not None and not 1 <= inj < len(self.layers):
            raise ValueError(f"injection index {inj} out of range")
        for i in range(1, len(self.layers)):
            prev_out = self.layers[i - 1].output_dim
            cur_in = self.layers[i].input_dim
            if i == inj:
                if cur_in <= prev_out:
                    raise ValueError("injected layer must widen its input")
            elif cur_in != prev_out:
                raise ValueError(f"layer {i} input {cur_in} != previous output {prev_out}")

    @property
    def total_params(self) -> int:
        return sum(spec.n_params for spec in self.layers)

    @property
    def obs_dim(self) -> int:
        return self.layers[0].input_dim

    @property
    def action_dim(self) -> int:
        inj = self.critic_action_injection
        if inj is None:
            return self.layers[-1].output_dim
        return self.layers[inj].input_dim - self.layers[inj - 1].output_dim


@dataclass(frozen=True)
class FlatParams:
    layout: NetLayout
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.shape != (self.layout.total_params,):
            raise ValueError(
                f"expected {self.layout.total_params} values, got shape {values.shape}"
            )
        if not np.isfinite(values).all():
            raise NumericFailure("parameter values must be finite")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class BackpropResult:
    param_grads: np.ndarray
    input_grads: np.ndarray


def build_actor_layout(obs_dim: int, action_dim: int, hidden: int) -> NetLayout:
    """Two ReLU hidden layers, tanh output bounded to (-1, 1)."""
    _check_dims(obs_dim=obs_dim, action_dim=action_dim, hidden=hidden)
    return NetLayout(
        (
            LayerSpec(obs_dim, hidden, RELU),
            LayerSpec(hidden, hidden, RELU),
            LayerSpec(hidden, action_dim, TANH),
        )
    )


def build_critic_layout(obs_dim: int, action_dim: int, hidden: int) -> NetLayout:
    """Same trunk as the actor; the action joins the second layer's input."""
    _check_dims(obs_dim=obs_dim, action_dim=action_dim, hidden=hidden)
    return NetLayout(
        (
            LayerSpec(obs_dim, hidden, RELU),
            LayerSpec(hidden + action_dim, hidden, RELU),
            LayerSpec(hidden, 1, IDENTITY),
        ),
        critic_action_injection=1,
    )


def _check_dims(**dims: int):
    for name, value in dims.items():
        if value < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")


def layer_views(params: FlatParams) -> list[tuple[np.ndarray, np.ndarray]]:
    """(W, b) views into the flat vector, one pair per layer. No copies."""
    views = []
    offset = 0
    for spec in params.layout.layers:
        n_w = spec.input_dim * spec.output_dim
        w = params.values[offset : offset + n_w].reshape(spec.output_dim, spec.input_dim)
        offset += n_w
        b = params.values[offset : offset + spec.output_dim]
        offset += spec.output_dim
        views.append((w, b))
    return views


def flatten_layers(layout: NetLayout, pairs) -> FlatParams:
    """Inverse of layer_views: pack (W, b) pairs back into a FlatParams."""
    chunks = []
    for spec, (w, b) in zip(layout.layers, pairs):
        if w.shape != (spec.output_dim, spec.input_dim) or b.shape != (spec.output_dim,):
            raise ValueError("layer shapes do not match layout")
        chunks.append(np.asarray(w, dtype=np.float64).ravel())
        chunks.append(np.asarray(b, dtype=np.float64))
    return FlatParams(layout, np.concatenate(chunks))


def xavier_init(layout: NetLayout, rng: np.random.Generator) -> FlatParams:
    """Glorot-uniform weights, zero biases. Deterministic given the generator."""
    values = np.zeros(layout.total_params)
    offset = 0
    for spec in layout.layers:
        n_w = spec.input_dim * spec.output_dim
        limit = np.sqrt(6.0 / (spec.input_dim + spec.output_dim))
        values[offset : offset + n_w] = rng.uniform(-limit, limit, n_w)
        offset += n_w + spec.output_dim  # biases stay zero
    return FlatParams(layout, values)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == RELU:
        return np.maximum(z, 0.0)
    if activation == TANH:
        return np.tanh(z)
    return z


def _activation_deriv(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == RELU:
        return (z > 0.0).astype(np.float64)
    if activation == TANH:
        t = np.tanh(z)
        return 1.0 - t * t
    return np.ones_like(z)


def _forward_pass(params: FlatParams, obs: np.ndarray, action: np.ndarray | None):
    """Run the net on a batch, keeping per-layer inputs and pre-activations."""
    layout = params.layout
    inj = layout.critic_action_injection
    h = obs
    layer_inputs = []
    preacts = []
    for i, ((w, b), spec) in enumerate(zip(layer_views(params), layout.layers)):
        if i == inj:
            h = np.concatenate([h, action], axis=1)
        layer_inputs.append(h)
        z = h @ w.T + b
        preacts.append(z)
        h = _activate(z, spec.activation)
    return layer_inputs, preacts, h


def _backward_pass(params: FlatParams, layer_inputs, preacts, out_grad: np.ndarray):
    """Chain rule back through the stored forward pass.

    out_grad is dL/d(output) per batch row. Returns flat parameter gradients
    summed over the batch plus per-row gradients w.r.t. the first layer's
    input and, for injected layouts, w.r.t. the action.
    """
    layout = params.layout
    inj = layout.critic_action_injection
    views = layer_views(params)
    param_grads = np.zeros(layout.total_params)
    offset = layout.total_params
    g = out_grad
    action_grads = None
    for i in range(len(layout.layers) - 1, -1, -1):
        spec = layout.layers[i]
        w, _ = views[i]
        g = g * _activation_deriv(preacts[i], spec.activation)  # dL/dz
        n_w = spec.input_dim * spec.output_dim
        offset -= spec.n_params
        param_grads[offset : offset + n_w] = (g.T @ layer_inputs[i]).ravel()
        param_grads[offset + n_w : offset + spec.n_params] = g.sum(axis=0)
        g = g @ w  # dL/d(input of layer i)
        if i == inj:
            prev_out = layout.layers[i - 1].output_dim
            action_grads = g[:, prev_out:]
            g = g[:, :prev_out]
    return param_grads, g, action_grads


def _as_batch(x: np.ndarray, dim: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"{name} must have width {dim}, got shape {x.shape}")
    return x


def actor_forward_batch(params: FlatParams, obs: np.ndarray) -> np.ndarray:
    if params.layout.critic_action_injection is not None:
        raise ValueError("actor_forward called with a critic layout")
    obs = _as_batch(obs, params.layout.obs_dim, "obs")
    _, _, out = _forward_pass(params, obs, None)
    return out


def actor_forward(params: FlatParams, obs: np.ndarray) -> np.ndarray:
    """Deterministic policy: obs -> action in (-1, 1)^action_dim."""
    return actor_forward_batch(params, obs)[0]


def critic_forward_batch(params: FlatParams, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
    layout = params.layout
    if layout.critic_action_injection is None:
        raise ValueError("critic_forward called with an actor layout")
    obs = _as_batch(obs, layout.obs_dim, "obs")
    action = _as_batch(action, layout.action_dim, "action")
    if obs.shape[0] != action.shape[0]:
        raise ValueError("obs and action batch sizes differ")
    _, _, out = _forward_pass(params, obs, action)
    return out[:, 0]


def critic_forward(params: FlatParams, obs: np.ndarray, action: np.ndarray) -> float:
    """State-action value Q(s, a)."""
    return float(critic_forward_batch(params, obs, action)[0])


def critic_backward_batch(
    params: FlatParams, obs: np.ndarray, action: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of sum_b upstream_b * Q(s_b, a_b).

    Returns (flat parameter gradients summed over the batch, per-row action
    gradients).
    """
    layout = params.layout
    if layout.critic_action_injection is None:
        raise ValueError("critic_backward called with an actor layout")
    obs = _as_batch(obs, layout.obs_dim, "obs")
    action = _as_batch(action, layout.action_dim, "action")
    upstream = np.asarray(upstream, dtype=np.float64).reshape(-1)
    if not (obs.shape[0] == action.shape[0] == upstream.shape[0]):
        raise ValueError("obs, action and upstream batch sizes differ")
    layer_inputs, preacts, _ = _forward_pass(params, obs, action)
    param_grads, _, action_grads = _backward_pass(
        params, layer_inputs, preacts, upstream[:, np.newaxis]
    )
    return param_grads, action_grads


def critic_backward(
    params: FlatParams, obs: np.ndarray, action: np.ndarray, upstream: float = 1.0
) -> BackpropResult:
    """dQ/dparams and dQ/daction for one (s, a), scaled by upstream."""
    param_grads, action_grads = critic_backward_batch(
        params, obs, action, np.array([float(upstream)])
    )
    return BackpropResult(param_grads=param_grads, input_grads=action_grads[0])


def actor_backward_batch(
    params: FlatParams, obs: np.ndarray, upstream_action_grad: np.ndarray
) -> np.ndarray:
    """Flat gradients of sum_b upstream_b . action_b, summed over the batch."""
    layout = params.layout
    if layout.critic_action_injection is not None:
        raise ValueError("actor_backward called with a critic layout")
    obs = _as_batch(obs, layout.obs_dim, "obs")
    upstream = _as_batch(upstream_action_grad, layout.action_dim, "upstream_action_grad")
    if obs.shape[0] != upstream.shape[0]:
        raise ValueError("obs and upstream batch sizes differ")
    layer_inputs, preacts, _ = _forward_pass(params, obs, None)
    param_grads, _, _ = _backward_pass(params, layer_inputs, preacts, upstream)
    return param_grads


def actor_backward(
    params: FlatParams, obs: np.ndarray, upstream_action_grad: np.ndarray
) -> np.ndarray:
    """Chain rule of the policy output against an external action gradient."""
    return actor_backward_batch(params, obs, upstream_action_grad)

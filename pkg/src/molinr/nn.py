"""Modulated conditional INR with hand-written reverse mode, plus optimizers.

Shapes: a batch of B coordinate rows ``phi`` (B, d) belongs to M latents ``z``
(M, k); ``index`` (B,) maps each row to its latent. Modulations depend on z
only, so they are computed once per latent and gathered per row.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("sine", "relu")


@dataclass
class Dense:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weight.T + self.bias


@dataclass(frozen=True)
class NetworkDims:
    d: int
    k: int
    hidden: int
    f: int
    layers: int

    def __post_init__(self):
        for name in ("d", "k", "hidden", "f", "layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class ConditionalINR:
    dims: NetworkDims
    activation: str
    omega0: float
    synthesis: list[Dense]  # `layers` hidden layers then the linear output layer
    modulation: list[Dense]  # one per hidden synthesis layer

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if len(self.synthesis) != self.dims.layers + 1 or len(self.modulation) != self.dims.layers:
            raise ValueError("layer counts do not match dims")

    def layers(self) -> list[Dense]:
        """Every dense layer in declaration order: synthesis then modulation."""
        return [*self.synthesis, *self.modulation]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers():
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "ConditionalINR":
        return ConditionalINR(
            self.dims, self.activation, self.omega0,
            [Dense(l.weight.copy(), l.bias.copy()) for l in self.synthesis],
            [Dense(l.weight.copy(), l.bias.copy()) for l in self.modulation],
        )

    def __call__(self, z, phi, index=None) -> np.ndarray:
        return inr_forward(self, z, phi, index)[0]


@dataclass
class Tape:
    z: np.ndarray
    index: np.ndarray | None
    mod_inputs: list[np.ndarray]
    mod_pre: list[np.ndarray]
    alphas: list[np.ndarray]
    syn_inputs: list[np.ndarray]
    syn_pre: list[np.ndarray]
    syn_act: list[np.ndarray]
    net_id: int = 0


@dataclass
class GradientBundle:
    synthesis: list[Dense]
    modulation: list[Dense]
    z: np.ndarray

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in [*self.synthesis, *self.modulation]:
            out.extend((layer.weight, layer.bias))
        return out


def _as_batch(z, phi, index):
    z = np.asarray(z, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    if phi.ndim == 1:
        phi = phi[None, :]
    if index is not None:
        index = np.asarray(index, dtype=np.intp)
        if index.shape != (phi.shape[0],):
            raise ValueError("index must hold one latent id per coordinate row")
    elif z.shape[0] != 1:
        raise ValueError("several latents need an index array")
    return z, phi, index


def _gather(a: np.ndarray, index) -> np.ndarray:
    return a[index] if index is not None else a


def _scatter(rows: np.ndarray, index, m: int) -> np.ndarray:
    if index is None:
        return rows.sum(axis=0, keepdims=True)
    out = np.zeros((m, rows.shape[1]))
    np.add.at(out, index, rows)
    return out


def inr_forward(net: ConditionalINR, z, phi, index=None) -> tuple[np.ndarray, Tape]:
    z, phi, index = _as_batch(z, phi, index)
    dims = net.dims
    if z.shape[1] != dims.k or phi.shape[1] != dims.d:
        raise ValueError(f"expected z width {dims.k} and phi width {dims.d}, got {z.shape[1]} and {phi.shape[1]}")

    mod_inputs, mod_pre, alphas = [], [], []
    alpha = None
    for i, layer in enumerate(net.modulation):
        inp = z if i == 0 else np.hstack([alpha, z])
        pre = layer(inp)
        alpha = np.maximum(pre, 0.0)
        mod_inputs.append(inp)
        mod_pre.append(pre)
        alphas.append(alpha)

    syn_inputs, syn_pre, syn_act = [], [], []
    h = phi
    for i, layer in enumerate(net.synthesis[:-1]):
        pre = layer(h)
        act = np.sin(net.omega0 * pre) if net.activation == "sine" else np.maximum(pre, 0.0)
        syn_inputs.append(h)
        syn_pre.append(pre)
        syn_act.append(act)
        h = _gather(alphas[i], index) * act
    syn_inputs.append(h)
    y = net.synthesis[-1](h)
    return y, Tape(z, index, mod_inputs, mod_pre, alphas, syn_inputs, syn_pre, syn_act, id(net))


def inr_backward(net: ConditionalINR, tape: Tape, dy, params: bool = True) -> GradientBundle:
    """Exact gradients of ``sum(dy * y)`` for every weight, bias and latent.

    With ``params=False`` only the latent gradient is formed and the layer
    entries of the bundle are None.
    """
    dy = np.asarray(dy, dtype=np.float64)
    if dy.ndim == 1:
        dy = dy[None, :]
    if tape.net_id != id(net) or len(tape.syn_act) != net.dims.layers:
        raise ValueError("tape was recorded on a different network")
    if dy.shape != (tape.syn_inputs[-1].shape[0], net.dims.f):
        raise ValueError(f"dy shape {dy.shape} does not match the forward batch")
    m = tape.z.shape[0]
    n_layers = net.dims.layers
    h_width = net.dims.hidden

    out = net.synthesis[-1]
    syn_grads = [None] * (n_layers + 1)
    if params:
        syn_grads[-1] = Dense(dy.T @ tape.syn_inputs[-1], dy.sum(axis=0))
    dh = dy @ out.weight

    dalpha = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        act = tape.syn_act[i]
        dalpha[i] = _scatter(dh * act, tape.index, m)
        dact = dh * _gather(tape.alphas[i], tape.index)
        if net.activation == "sine":
            dpre = dact * (net.omega0 * np.cos(net.omega0 * tape.syn_pre[i]))
        else:
            dpre = dact * (tape.syn_pre[i] > 0)
        if params:
            syn_grads[i] = Dense(dpre.T @ tape.syn_inputs[i], dpre.sum(axis=0))
        if i > 0:
            dh = dpre @ net.synthesis[i].weight

    mod_grads = [None] * n_layers
    dz = np.zeros_like(tape.z)
    carry = np.zeros((m, h_width))
    for i in range(n_layers - 1, -1, -1):
        da = dalpha[i] + carry
        dpre = da * (tape.mod_pre[i] > 0)
        if params:
            mod_grads[i] = Dense(dpre.T @ tape.mod_inputs[i], dpre.sum(axis=0))
        dinp = dpre @ net.modulation[i].weight
        if i == 0:
            dz += dinp
        else:
            carry = dinp[:, :h_width]
            dz += dinp[:, h_width:]
    return GradientBundle(syn_grads, mod_grads, dz)


def _uniform(rng, bound, shape):
    return rng.uniform(-bound, bound, size=shape)


def init_network(dims: NetworkDims, activation: str = "sine", seed: int = 0,
                 omega0: float = 30.0) -> ConditionalINR:
    """SIREN-style initialization for sine synthesis layers, He-uniform for ReLU.

    Biases and modulation weights draw from U(+-1/sqrt(fan_in)). Modulation
    biases start at 1 so that every modulation unit is active, with alpha near
    one, at the latent origin.
    """
    if activation not in ACTIVATIONS:
        raise ValueError(f"activation must be one of {ACTIVATIONS}")
    rng = np.random.default_rng(seed)
    synthesis = []
    fan_in = dims.d
    for i in range(dims.layers + 1):
        fan_out = dims.f if i == dims.layers else dims.hidden
        if activation == "sine":
            bound = 1.0 / fan_in if i == 0 else np.sqrt(6.0 / fan_in) / omega0
        else:
            bound = np.sqrt(6.0 / fan_in)
        w = _uniform(rng, bound, (fan_out, fan_in))
        b = _uniform(rng, 1.0 / np.sqrt(fan_in), fan_out)
        synthesis.append(Dense(w, b))
        fan_in = fan_out
    modulation = []
    for i in range(dims.layers):
        fan_in = dims.k if i == 0 else dims.hidden + dims.k
        w = _uniform(rng, 1.0 / np.sqrt(fan_in), (dims.hidden, fan_in))
        modulation.append(Dense(w, np.ones(dims.hidden)))
    return ConditionalINR(dims, activation, float(omega0), synthesis, modulation)


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params, lr: float, **kw) -> "AdamState":
        return cls(lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **kw)


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, state {m.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def sgd_latent_step(z: np.ndarray, grad_z: np.ndarray, lr: float) -> np.ndarray:
    return z - lr * grad_z

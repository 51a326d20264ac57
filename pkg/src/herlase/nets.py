"""Minimal dense-network core: MLPs, hand-rolled backprop, Adam.

Everything downstream (policies, critics, success and dynamics models) is a
plain fully connected net, so there is no autodiff graph here -- just the
reverse-mode derivatives of a fixed MLP stack, written against float64
numpy arrays. Forward supports both single vectors and (batch, dim) arrays;
all training code uses the batched path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("linear", "tanh", "sigmoid")


class DimensionError(ValueError):
    """Input/parameter shape does not match the network."""


class DivergenceError(RuntimeError):
    """Training produced non-finite values."""


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    if name == "linear":
        return z
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray, h: np.ndarray) -> np.ndarray:
    # h is the already-computed activation output for z
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "tanh":
        return 1.0 - h * h
    if name == "sigmoid":
        return h * (1.0 - h)
    if name == "linear":
        return np.ones_like(z)
    raise ValueError(f"unknown activation {name!r}")


class Mlp:
    """Fully connected net with one hidden activation and one output activation.

    weights[i] has shape (layer_sizes[i+1], layer_sizes[i]); inputs are row
    vectors, so a layer computes ``x @ W.T + b``. Weight init is uniform in
    +-1/sqrt(fan_in) with zero biases, drawn from the supplied rng so
    construction is reproducible.
    """

    def __init__(
        self,
        layer_sizes: list[int],
        hidden_activation: str = "relu",
        output_activation: str = "linear",
        rng: np.random.Generator | None = None,
    ):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"hidden activation must be one of {HIDDEN_ACTIVATIONS}")
        if output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"output activation must be one of {OUTPUT_ACTIVATIONS}")
        self.layer_sizes = [int(s) for s in layer_sizes]
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            self.biases.append(np.zeros(fan_out, dtype=np.float64))

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Flat list [W0, b0, W1, b1, ...]; aliases, not copies."""
        out: list[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def set_parameters(self, params: list[np.ndarray]) -> None:
        expected = self.parameters()
        if len(params) != len(expected):
            raise DimensionError("parameter count mismatch")
        for i, (dst, src) in enumerate(zip(expected, params)):
            if dst.shape != src.shape:
                raise DimensionError(f"parameter {i} shape {src.shape} != {dst.shape}")
        for layer in range(self.n_layers):
            self.weights[layer] = params[2 * layer].astype(np.float64, copy=True)
            self.biases[layer] = params[2 * layer + 1].astype(np.float64, copy=True)

    def copy(self) -> "Mlp":
        dup = Mlp.__new__(Mlp)
        dup.layer_sizes = list(self.layer_sizes)
        dup.hidden_activation = self.hidden_activation
        dup.output_activation = self.output_activation
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def _activation_for(self, layer: int) -> str:
        return self.output_activation if layer == self.n_layers - 1 else self.hidden_activation

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the net. Accepts (dim,) or (batch, dim); pure, no caching."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise DimensionError(
                f"input has trailing dim {h.shape[-1]}, net expects {self.input_dim}"
            )
        for layer in range(self.n_layers):
            z = h @ self.weights[layer].T + self.biases[layer]
            h = _act(self._activation_for(layer), z)
        return h[0] if single else h

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        """Forward pass that keeps per-layer pre/post activations for backward."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        h = x[None, :] if single else x
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise DimensionError(
                f"input has trailing dim {h.shape[-1]}, net expects {self.input_dim}"
            )
        zs: list[np.ndarray] = []
        hs: list[np.ndarray] = [h]
        for layer in range(self.n_layers):
            z = h @ self.weights[layer].T + self.biases[layer]
            h = _act(self._activation_for(layer), z)
            zs.append(z)
            hs.append(h)
        cache = {"zs": zs, "hs": hs, "single": single}
        return (h[0] if single else h), cache

    def input_gradient(self, cache: dict, output_gradient: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. the input only (skips the parameter gradients)."""
        g = np.asarray(output_gradient, dtype=np.float64)
        if cache["single"]:
            g = g[None, :]
        zs, hs = cache["zs"], cache["hs"]
        if g.shape != hs[-1].shape:
            raise DimensionError(
                f"output gradient shape {g.shape} != output shape {hs[-1].shape}"
            )
        for layer in range(self.n_layers - 1, -1, -1):
            dz = g * _act_grad(self._activation_for(layer), zs[layer], hs[layer + 1])
            g = dz @ self.weights[layer]
        return g[0] if cache["single"] else g

    def backward(
        self, cache: dict, output_gradient: np.ndarray
    ) -> tuple[list[np.ndarray], np.ndarray]:
        """Reverse-mode gradients for a cached forward pass.

        output_gradient has the same shape as the forward output (vector or
        batch). Returns (param_grads, input_grad) where param_grads matches
        parameters() ordering and sums over the batch.
        """
        g = np.asarray(output_gradient, dtype=np.float64)
        if cache["single"]:
            g = g[None, :]
        zs, hs = cache["zs"], cache["hs"]
        if g.shape != hs[-1].shape:
            raise DimensionError(
                f"output gradient shape {g.shape} != output shape {hs[-1].shape}"
            )
        w_grads: list[np.ndarray] = [np.empty(0)] * self.n_layers
        b_grads: list[np.ndarray] = [np.empty(0)] * self.n_layers
        for layer in range(self.n_layers - 1, -1, -1):
            dz = g * _act_grad(self._activation_for(layer), zs[layer], hs[layer + 1])
            w_grads[layer] = dz.T @ hs[layer]
            b_grads[layer] = dz.sum(axis=0)
            g = dz @ self.weights[layer]
        param_grads: list[np.ndarray] = []
        for wg, bg in zip(w_grads, b_grads):
            param_grads.append(wg)
            param_grads.append(bg)
        input_grad = g[0] if cache["single"] else g
        return param_grads, input_grad


@dataclass
class AdamState:
    """Per-parameter-list Adam moments with bias correction bookkeeping."""

    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    step_count: int = 0
    first_moments: list[np.ndarray] = field(default_factory=list)
    second_moments: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: list[np.ndarray], learning_rate: float, **kw) -> "AdamState":
        state = cls(learning_rate=learning_rate, **kw)
        state.first_moments = [np.zeros_like(p) for p in params]
        state.second_moments = [np.zeros_like(p) for p in params]
        return state


def adam_step(
    params: list[np.ndarray], grads: list[np.ndarray], state: AdamState
) -> list[np.ndarray]:
    """One Adam update, in place on params. Returns params for convenience."""
    if len(params) != len(grads) or len(params) != len(state.first_moments):
        raise DimensionError("params/grads/state length mismatch")
    # nan/inf both poison a plain sum, so one reduction per array suffices
    if not all(np.isfinite(g.sum()) for g in grads):
        raise DivergenceError("non-finite gradient in adam_step")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.first_moments, state.second_moments):
        if p.shape != g.shape:
            raise DimensionError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.eps_hat)
    return params


def polyak_update(target: Mlp, online: Mlp, tau: float) -> Mlp:
    """target <- tau*target + (1-tau)*online, elementwise over all parameters."""
    if target.layer_sizes != online.layer_sizes:
        raise DimensionError("target/online architecture mismatch")
    for t_arr, o_arr in zip(target.parameters(), online.parameters()):
        t_arr *= tau
        t_arr += (1.0 - tau) * o_arr
    return target

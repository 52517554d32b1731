"""Small fully connected networks with hand-rolled backprop, plus Adam.

ReLU hidden layers throughout; the output layer is tanh for policies that
emit commands and identity for value heads.  Gradients are exact, which the
test suite pins against central finite differences.
"""

from __future__ import annotations

import numpy as np

_ACTIVATIONS = ("tanh", "identity")


class Mlp:
    def __init__(
        self,
        layer_sizes: list[int],
        output_activation: str = "tanh",
        rng: np.random.Generator | None = None,
        final_init_scale: float = 3e-3,
    ):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output sizes")
        if output_activation not in _ACTIVATIONS:
            raise ValueError(f"output_activation must be one of {_ACTIVATIONS}")
        rng = rng if rng is not None else np.random.default_rng()
        self.layer_sizes = list(layer_sizes)
        self.output_activation = output_activation
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for i, (n_in, n_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
            if i == len(layer_sizes) - 2:
                w = rng.uniform(-final_init_scale, final_init_scale, (n_in, n_out))
            else:
                # He-uniform for the ReLU stack
                bound = np.sqrt(6.0 / n_in)
                w = rng.uniform(-bound, bound, (n_in, n_out))
            self.weights.append(w)
            self.biases.append(np.zeros(n_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, _ = self.forward_cached(x)
        return y

    def forward_cached(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass keeping per-layer inputs for the backward pass."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        cache = [x]
        h = x
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                h = np.maximum(z, 0.0)
            elif self.output_activation == "tanh":
                h = np.tanh(z)
            else:
                h = z
            cache.append(h)
        if not np.all(np.isfinite(h)):
            raise FloatingPointError("network produced non-finite output")
        return h, cache

    def backward(
        self, cache: list[np.ndarray], grad_out: np.ndarray
    ) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
        """Backpropagate d(loss)/d(output); returns per-layer grads and d(loss)/d(input)."""
        grad = np.atleast_2d(np.asarray(grad_out, dtype=float))
        if self.output_activation == "tanh":
            grad = grad * (1.0 - cache[-1] ** 2)
        param_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * self.n_layers
        for i in range(self.n_layers - 1, -1, -1):
            inp = cache[i]
            param_grads[i] = (inp.T @ grad, grad.sum(axis=0))
            grad = grad @ self.weights[i].T
            if i > 0:
                grad = grad * (cache[i] > 0.0)
        return param_grads, grad

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy_from(self, other: "Mlp") -> None:
        if other.layer_sizes != self.layer_sizes:
            raise ValueError("layer size mismatch")
        for dst, src in zip(self.parameters(), other.parameters()):
            dst[...] = src

    def clone(self) -> "Mlp":
        twin = Mlp(self.layer_sizes, self.output_activation, np.random.default_rng(0))
        twin.copy_from(self)
        return twin

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "output_activation": self.output_activation,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, blob: dict) -> "Mlp":
        net = cls(blob["layer_sizes"], blob["output_activation"], np.random.default_rng(0))
        net.weights = [np.asarray(w, dtype=float) for w in blob["weights"]]
        net.biases = [np.asarray(b, dtype=float) for b in blob["biases"]]
        return net


class Adam:
    """Per-network Adam state; ``step`` applies one descent update in place."""

    def __init__(self, net: Mlp, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p) for p in net.parameters()]
        self._v = [np.zeros_like(p) for p in net.parameters()]

    def step(self, net: Mlp, param_grads: list[tuple[np.ndarray, np.ndarray]]) -> None:
        flat_grads = []
        for gw, gb in param_grads:
            flat_grads.append(gw)
            flat_grads.append(gb)
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(net.parameters(), flat_grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


def soft_update(target: Mlp, online: Mlp, tau: float) -> None:
    """target <- (1 - tau) * target + tau * online, elementwise."""
    if target.layer_sizes != online.layer_sizes:
        raise ValueError("layer size mismatch between target and online nets")
    for t, o in zip(target.parameters(), online.parameters()):
        t *= 1.0 - tau
        t += tau * o

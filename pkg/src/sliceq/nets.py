"""Hand-built network kernels: feedforward, gated-recurrent, convolutional.

Forward passes, manual backpropagation and SGD steps with no autodiff
framework. All kernels consume frames shaped (batch, memory, n_slices)
and emit one scalar per frame. An optional counter instruments the
number of scalar multiplications spent in weight applications (matrix
products with weights and filters; bias adds, activations and gate
elementwise products are free by that metric).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray


@dataclass(slots=True)
class MultCounter:
    """Accumulates scalar multiplications spent applying weights."""

    count: int = 0

    def add(self, n: int) -> None:
        self.count += int(n)


def _activation(name: str):
    """Returns (f, df) with df taking (pre, out)."""
    if name == "sigmoid":
        return (
            lambda z: 1.0 / (1.0 + np.exp(-z)),
            lambda z, y: y * (1.0 - y),
        )
    if name == "tanh":
        return (np.tanh, lambda z, y: 1.0 - y * y)
    if name == "relu":
        return (lambda z: np.maximum(z, 0.0), lambda z, y: (z > 0.0).astype(z.dtype))
    if name == "linear":
        return (lambda z: z, lambda z, y: np.ones_like(z))
    raise ValueError(f"unknown activation {name!r}")


def _glorot(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> NDArray[np.float64]:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


class FeedforwardNet:
    """One hidden layer: y = f_out(f_h(x W_h + b_h) W_out), no output bias."""

    arch = "fnn"

    def __init__(self, memory: int, n_slices: int, n_hidden: int, f_hidden: str, f_out: str, rng: np.random.Generator):
        self.memory = memory
        self.n_slices = n_slices
        self.n_features = memory * n_slices
        self.n_hidden = n_hidden
        self.f_hidden_name = f_hidden
        self.f_out_name = f_out
        self._fh, self._dfh = _activation(f_hidden)
        self._fo, self._dfo = _activation(f_out)
        self.w_hidden = _glorot(rng, (self.n_features, n_hidden), self.n_features, n_hidden)
        self.b_hidden = np.zeros(n_hidden)
        self.w_out = _glorot(rng, (n_hidden, 1), n_hidden, 1)

    def forward(self, frames: NDArray, counter: MultCounter | None = None):
        b = frames.shape[0]
        x = frames.reshape(b, self.n_features)
        z = x @ self.w_hidden + self.b_hidden
        h = self._fh(z)
        o = (h @ self.w_out)[:, 0]
        y = self._fo(o)
        if counter is not None:
            counter.add(b * self.n_features * self.n_hidden)
            counter.add(b * self.n_hidden * 1)
        return y, (x, z, h, o, y)

    def backward(self, cache, dy: NDArray):
        x, z, h, o, y = cache
        dpre_out = dy * self._dfo(o, y)
        dw_out = h.T @ dpre_out[:, None]
        dh = dpre_out[:, None] @ self.w_out.T
        dz = dh * self._dfh(z, h)
        return {
            "w_hidden": x.T @ dz,
            "b_hidden": dz.sum(axis=0),
            "w_out": dw_out,
        }

    def params(self) -> dict[str, NDArray]:
        return {"w_hidden": self.w_hidden, "b_hidden": self.b_hidden, "w_out": self.w_out}

    def sgd_step(self, grads: dict[str, NDArray], lr: float) -> None:
        for name, p in self.params().items():
            p -= lr * grads[name]


class GruNet:
    """Gated recurrent cell over the memory axis, scalar readout.

    Gates per step t (u_t is the n_slices feature vector):
        r_t = sigmoid(u_t W_r + h_{t-1} U_r + b_r)
        s_t = sigmoid(u_t W_s + h_{t-1} U_s + b_s)
        c_t = tanh(u_t W_h + r_t * (h_{t-1} U_h + b_h))
        h_t = (1 - s_t) * h_{t-1} + sign * s_t * c_t
    sign is -1 for the "verbatim" variant and +1 for the "standard" one.
    Readout maps the final state (or the per-step mean of linear
    readouts) through f_out; the readout layer carries a bias.
    """

    arch = "gru"

    def __init__(
        self,
        memory: int,
        n_slices: int,
        n_hidden: int,
        f_out: str,
        rng: np.random.Generator,
        variant: str = "verbatim",
        readout: str = "final_state",
    ):
        if variant not in ("verbatim", "standard"):
            raise ValueError(f"unknown GRU variant {variant!r}")
        if readout not in ("final_state", "per_step_mean"):
            raise ValueError(f"unknown readout {readout!r}")
        self.memory = memory
        self.n_slices = n_slices
        self.n_hidden = n_hidden
        self.f_out_name = f_out
        self.variant = variant
        self.readout = readout
        self._sign = -1.0 if variant == "verbatim" else 1.0
        self._fo, self._dfo = _activation(f_out)
        n, nh = n_slices, n_hidden
        self.w_r = _glorot(rng, (n, nh), n, nh)
        self.u_r = _glorot(rng, (nh, nh), nh, nh)
        self.b_r = np.zeros(nh)
        self.w_s = _glorot(rng, (n, nh), n, nh)
        self.u_s = _glorot(rng, (nh, nh), nh, nh)
        self.b_s = np.zeros(nh)
        self.w_h = _glorot(rng, (n, nh), n, nh)
        self.u_h = _glorot(rng, (nh, nh), nh, nh)
        self.b_h = np.zeros(nh)
        self.w_y = _glorot(rng, (nh, 1), nh, 1)
        self.b_y = np.zeros(1)

    def forward(self, frames: NDArray, counter: MultCounter | None = None):
        b, m, _ = frames.shape
        nh = self.n_hidden
        h = np.zeros((b, nh))
        steps = []
        o_sum = np.zeros(b)
        sig = lambda z: 1.0 / (1.0 + np.exp(-z))
        for t in range(m):
            u = frames[:, t, :]
            r = sig(u @ self.w_r + h @ self.u_r + self.b_r)
            s = sig(u @ self.w_s + h @ self.u_s + self.b_s)
            v = h @ self.u_h + self.b_h
            c = np.tanh(u @ self.w_h + r * v)
            h_new = (1.0 - s) * h + self._sign * s * c
            steps.append((u, h, r, s, v, c))
            h = h_new
            if self.readout == "per_step_mean":
                o_sum += (h @ self.w_y)[:, 0]
        if counter is not None:
            counter.add(b * m * 3 * (self.n_slices * nh + nh * nh))
            counter.add(b * nh * (m if self.readout == "per_step_mean" else 1))
        if self.readout == "per_step_mean":
            o = o_sum / m + self.b_y[0]
        else:
            o = (h @ self.w_y)[:, 0] + self.b_y[0]
        y = self._fo(o)
        return y, (steps, h, o, y)

    def backward(self, cache, dy: NDArray):
        steps, h_last, o, y = cache
        b, m = dy.shape[0], len(steps)
        nh = self.n_hidden
        dpre = dy * self._dfo(o, y)
        g = {name: np.zeros_like(p) for name, p in self.params().items()}
        g["b_y"] = np.array([dpre.sum()])

        # state h_t after step t; steps[t] holds h_{t-1}
        h_states = [steps[t + 1][1] for t in range(m - 1)] + [h_last]
        if self.readout == "per_step_mean":
            dh_inject = (dpre / m)[:, None] @ self.w_y.T
            for t in range(m):
                g["w_y"] += h_states[t].T @ (dpre / m)[:, None]
            dh = dh_inject.copy()
        else:
            g["w_y"] = h_states[-1].T @ dpre[:, None]
            dh = dpre[:, None] @ self.w_y.T

        for t in range(m - 1, -1, -1):
            u, h_prev, r, s, v, c = steps[t]
            ds = dh * (-h_prev + self._sign * c)
            dc = dh * (self._sign * s)
            dh_prev = dh * (1.0 - s)

            da_c = dc * (1.0 - c * c)
            g["w_h"] += u.T @ da_c
            dr = da_c * v
            dv = da_c * r
            g["u_h"] += h_prev.T @ dv
            g["b_h"] += dv.sum(axis=0)
            dh_prev = dh_prev + dv @ self.u_h.T

            da_r = dr * r * (1.0 - r)
            g["w_r"] += u.T @ da_r
            g["u_r"] += h_prev.T @ da_r
            g["b_r"] += da_r.sum(axis=0)
            dh_prev = dh_prev + da_r @ self.u_r.T

            da_s = ds * s * (1.0 - s)
            g["w_s"] += u.T @ da_s
            g["u_s"] += h_prev.T @ da_s
            g["b_s"] += da_s.sum(axis=0)
            dh_prev = dh_prev + da_s @ self.u_s.T

            dh = dh_prev
            if self.readout == "per_step_mean" and t > 0:
                dh = dh + dh_inject
        return g

    def params(self) -> dict[str, NDArray]:
        return {
            "w_r": self.w_r, "u_r": self.u_r, "b_r": self.b_r,
            "w_s": self.w_s, "u_s": self.u_s, "b_s": self.b_s,
            "w_h": self.w_h, "u_h": self.u_h, "b_h": self.b_h,
            "w_y": self.w_y, "b_y": self.b_y,
        }

    def sgd_step(self, grads: dict[str, NDArray], lr: float) -> None:
        for name, p in self.params().items():
            p -= lr * grads[name]


class ConvNet:
    """One valid-mode convolution layer plus a linear output layer.

    n_hidden filters of shape (width, n_slices) slide along the memory
    axis with stride 1 and no padding, one bias per filter; the
    (positions x filters) feature maps flatten into a bias-free linear
    output layer.
    """

    arch = "cnn"

    def __init__(
        self,
        memory: int,
        n_slices: int,
        n_hidden: int,
        width: int,
        f_hidden: str,
        f_out: str,
        rng: np.random.Generator,
    ):
        if not 1 <= width <= memory:
            raise ValueError(f"filter width must be in [1, {memory}], got {width}")
        self.memory = memory
        self.n_slices = n_slices
        self.n_hidden = n_hidden
        self.width = width
        self.n_positions = memory - width + 1
        self.f_hidden_name = f_hidden
        self.f_out_name = f_out
        self._fh, self._dfh = _activation(f_hidden)
        self._fo, self._dfo = _activation(f_out)
        self.filters = _glorot(rng, (n_hidden, width, n_slices), width * n_slices, n_hidden)
        self.bias = np.zeros(n_hidden)
        self.w_out = _glorot(rng, (self.n_positions * n_hidden, 1), self.n_positions * n_hidden, 1)

    def forward(self, frames: NDArray, counter: MultCounter | None = None):
        b = frames.shape[0]
        # xw[i, p, n, w] = frames[i, p + w, n]
        xw = np.lib.stride_tricks.sliding_window_view(frames, self.width, axis=1)
        z = np.einsum("bpnw,gwn->bpg", xw, self.filters, optimize=True) + self.bias
        fm = self._fh(z)
        flat = fm.reshape(b, -1)
        o = (flat @ self.w_out)[:, 0]
        y = self._fo(o)
        if counter is not None:
            counter.add(b * self.n_slices * self.n_hidden * self.width * self.n_positions)
            counter.add(b * self.n_positions * self.n_hidden * 1)
        return y, (xw, z, fm, flat, o, y)

    def backward(self, cache, dy: NDArray):
        xw, z, fm, flat, o, y = cache
        b = dy.shape[0]
        dpre_out = dy * self._dfo(o, y)
        dw_out = flat.T @ dpre_out[:, None]
        dflat = dpre_out[:, None] @ self.w_out.T
        dz = dflat.reshape(b, self.n_positions, self.n_hidden) * self._dfh(z, fm)
        return {
            "filters": np.einsum("bpnw,bpg->gwn", xw, dz, optimize=True),
            "bias": dz.sum(axis=(0, 1)),
            "w_out": dw_out,
        }

    def params(self) -> dict[str, NDArray]:
        return {"filters": self.filters, "bias": self.bias, "w_out": self.w_out}

    def sgd_step(self, grads: dict[str, NDArray], lr: float) -> None:
        for name, p in self.params().items():
            p -= lr * grads[name]


def parameter_multiplies(net) -> int:
    """Multiplicative-weight count implied by the stored tensors.

    Biases do not multiply, so this equals the per-unit weight-application
    count for the feedforward and convolutional kernels.
    """
    if net.arch == "fnn":
        return net.w_hidden.size + net.w_out.size
    if net.arch == "cnn":
        return net.filters.size * net.n_positions + net.w_out.size
    total = 0
    for name, p in net.params().items():
        if name.startswith(("w_", "u_")) and name != "w_y":
            total += p.size * net.memory
    return total + net.w_y.size * (net.memory if net.readout == "per_step_mean" else 1)

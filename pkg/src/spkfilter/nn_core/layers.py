"""Fully connected and LSTM layers with tape-recorded forward passes.

All parameters are float64. Weights are initialized uniform in
+-sqrt(6 / (fan_in + fan_out)); LSTM forget-gate biases start at 1.0 so cells
retain state early in training.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from . import tape as T
from .tape import Tensor

ACTIVATIONS = ("identity", "sigmoid", "tanh", "relu")


def _init_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _apply_activation(x, kind):
    if kind == "identity":
        return x
    if kind == "sigmoid":
        return T.sigmoid(x)
    if kind == "tanh":
        return T.tanh(x)
    if kind == "relu":
        return T.relu(x)
    raise ConfigError(f"unknown activation {kind!r}")


class Fc:
    """Dense layer ``act(weight @ x + bias)`` with weight shaped [out, in]."""

    def __init__(self, in_dim, out_dim, activation="identity", rng=None, name="fc"):
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.name = name
        self.weight = Tensor(_init_uniform(rng, (out_dim, in_dim), in_dim, out_dim),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def params(self):
        return [(self.name + ".weight", self.weight), (self.name + ".bias", self.bias)]

    def __call__(self, x):
        """Forward one vector (1-D) or a stack of rows (2-D, one per frame)."""
        data = x.data if isinstance(x, Tensor) else np.asarray(x)
        if data.shape[-1] != self.in_dim:
            raise ConfigError(
                f"{self.name}: input dim {data.shape[-1]} != expected {self.in_dim}")
        if data.ndim == 1:
            z = T.add(T.matmul(self.weight, x), self.bias)
        else:
            z = T.add(T.matmul_t(x, self.weight), self.bias)
        return _apply_activation(z, self.activation)


def fc_forward(fc: Fc, x):
    return fc(x)


class LstmState:
    """Hidden/cell pair carried across frames of one stream."""

    __slots__ = ("hidden", "cell")

    def __init__(self, hidden, cell):
        self.hidden = hidden
        self.cell = cell

    @classmethod
    def zeros(cls, hidden_dim):
        return cls(Tensor(np.zeros(hidden_dim)), Tensor(np.zeros(hidden_dim)))


class Lstm:
    """Single LSTM layer with fused gate parameters.

    Gate blocks are stacked in the order (input, forget, output, cell):
    ``w_x`` is [4H, D_in], ``w_h`` is [4H, H], ``bias`` is [4H]. The three
    sigmoid gates are contiguous so the fused path applies one sigmoid.
    """

    def __init__(self, in_dim, hidden_dim, rng=None, forget_bias=1.0, name="lstm"):
        if rng is None:
            rng = np.random.default_rng(0)
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        self.name = name
        h = hidden_dim
        self.w_x = Tensor(_init_uniform(rng, (4 * h, in_dim), in_dim, h),
                          requires_grad=True)
        self.w_h = Tensor(_init_uniform(rng, (4 * h, h), h, h), requires_grad=True)
        bias = np.zeros(4 * h)
        bias[h:2 * h] = forget_bias
        self.bias = Tensor(bias, requires_grad=True)

    def params(self):
        return [(self.name + ".w_x", self.w_x),
                (self.name + ".w_h", self.w_h),
                (self.name + ".bias", self.bias)]

    def initial_state(self):
        return LstmState.zeros(self.hidden_dim)

    def _gates(self, z, state):
        h = self.hidden_dim
        i = T.sigmoid(T.narrow(z, 0, h))
        f = T.sigmoid(T.narrow(z, h, 2 * h))
        o = T.sigmoid(T.narrow(z, 2 * h, 3 * h))
        g = T.tanh(T.narrow(z, 3 * h, 4 * h))
        cell = T.add(T.mul(f, state.cell), T.mul(i, g))
        hidden = T.mul(o, T.tanh(cell))
        return LstmState(hidden, cell), hidden

    def step(self, state: LstmState, x):
        """One frame; returns (new state, output). Output equals the new hidden."""
        data = x.data if isinstance(x, Tensor) else np.asarray(x)
        if data.shape[-1] != self.in_dim:
            raise ConfigError(
                f"{self.name}: input dim {data.shape[-1]} != expected {self.in_dim}")
        xp = T.add(T.matmul(self.w_x, x), self.bias)
        z = T.add(xp, T.matmul(self.w_h, state.hidden))
        return self._gates(z, state)

    def run(self, frames, state=None):
        """All frames of one stream in a single fused tape op.

        ``frames`` is [n_frames, in_dim]. Returns ([n_frames, H] outputs, final
        state). Causal by construction and numerically equivalent to folding
        per-frame ``step``; the fused backward is plain BPTT with batched
        weight-gradient products. Gradients do not flow through a provided
        initial state on this path (training always starts from fresh zeros);
        ``step`` composition covers that case.
        """
        data = frames.data if isinstance(frames, Tensor) else \
            np.asarray(frames, dtype=np.float64)
        if data.shape[-1] != self.in_dim:
            raise ConfigError(
                f"{self.name}: input dim {data.shape[-1]} != expected {self.in_dim}")
        if state is None:
            state = self.initial_state()
        n = data.shape[0]
        if n == 0:
            return Tensor(np.zeros((0, self.hidden_dim))), state
        outputs, final = _lstm_sequence(frames, self.w_x, self.w_h, self.bias,
                                        state.hidden.data, state.cell.data,
                                        self.hidden_dim)
        return outputs, final


def lstm_step(lstm: Lstm, state: LstmState, x):
    return lstm.step(state, x)


def _sigmoid_fast(x):
    # logistic via tanh: stable for any finite input, no overflow branches
    out = np.tanh(0.5 * x)
    out += 1.0
    out *= 0.5
    return out


def _lstm_sequence(frames, w_x, w_h, bias, h0, c0, hidden):
    """Whole-sequence LSTM as one tape node with hand-coded BPTT.

    Returns ([n_frames, H] outputs tensor, final LstmState with constant
    tensors). Saves gate activations only while a tape is recording.
    """
    data = frames.data if isinstance(frames, Tensor) else frames
    n = data.shape[0]
    wx, wh, b = w_x.data, w_h.data, bias.data
    xproj = data @ wx.T + b
    need_grad = T.tape_active() and (
        w_x.requires_grad or (isinstance(frames, Tensor) and frames.requires_grad))

    outputs = np.empty((n, hidden))
    h, c = h0, c0
    if need_grad:
        gates_i = np.empty((n, hidden))
        gates_f = np.empty((n, hidden))
        gates_g = np.empty((n, hidden))
        gates_o = np.empty((n, hidden))
        cells = np.empty((n, hidden))
        tanh_cells = np.empty((n, hidden))
        h_prev = np.empty((n, hidden))
    for t in range(n):
        z = xproj[t] + wh @ h
        ifo = _sigmoid_fast(z[: 3 * hidden])
        i = ifo[:hidden]
        f = ifo[hidden: 2 * hidden]
        o = ifo[2 * hidden:]
        g = np.tanh(z[3 * hidden:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        if need_grad:
            gates_i[t] = i
            gates_f[t] = f
            gates_g[t] = g
            gates_o[t] = o
            cells[t] = c_new
            tanh_cells[t] = tc
            h_prev[t] = h
        h = o * tc
        c = c_new
        outputs[t] = h

    def factory():
        def bwd(grad_out):
            gz_all = np.empty((n, 4 * hidden))
            gh_carry = np.zeros(hidden)
            gc = np.zeros(hidden)
            for t in range(n - 1, -1, -1):
                gh = grad_out[t] + gh_carry
                tc = tanh_cells[t]
                go = gh * tc
                gc = gc + gh * gates_o[t] * (1.0 - tc * tc)
                i, f, g = gates_i[t], gates_f[t], gates_g[t]
                c_prev = cells[t - 1] if t > 0 else c0
                gz = gz_all[t]
                gz[:hidden] = gc * g * i * (1.0 - i)
                gz[hidden: 2 * hidden] = gc * c_prev * f * (1.0 - f)
                gz[2 * hidden: 3 * hidden] = go * gates_o[t] * (1.0 - gates_o[t])
                gz[3 * hidden:] = gc * i * (1.0 - g * g)
                gh_carry = wh.T @ gz
                gc = gc * f
            if w_x.requires_grad:
                T._acc(w_x, gz_all.T @ data)
                T._acc(w_h, gz_all.T @ h_prev)
                T._acc(bias, gz_all.sum(axis=0))
            if isinstance(frames, Tensor) and frames.requires_grad:
                T._acc(frames, gz_all @ wx)
        return bwd

    out = T._result(outputs, factory, frames, w_x, w_h, bias)
    final = LstmState(Tensor(h), Tensor(c))
    return out, final


class LstmStack:
    """Several LSTM layers run frame-synchronously."""

    def __init__(self, in_dim, hidden_dims, rng=None, name="stack"):
        self.layers = []
        d = in_dim
        for idx, h in enumerate(hidden_dims):
            self.layers.append(Lstm(d, h, rng=rng, name=f"{name}.l{idx}"))
            d = h
        self.out_dim = d

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def initial_states(self):
        return [layer.initial_state() for layer in self.layers]

    def step(self, states, x):
        new_states = []
        out = x
        for layer, state in zip(self.layers, states):
            state, out = layer.step(state, out)
            new_states.append(state)
        return new_states, out

    def run(self, frames, states=None):
        if states is None:
            states = self.initial_states()
        out = frames
        new_states = []
        for layer, state in zip(self.layers, states):
            out, final = layer.run(out, state)
            new_states.append(final)
        return out, new_states

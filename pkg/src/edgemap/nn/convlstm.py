"""Convolutional LSTM cell with unrolled backpropagation through time.

Gates i, f, o, g each apply their own same-padding convolution to the
channel-concatenation [x_t; h_{t-1}]:

    i, f, o = sigmoid(conv_{i,f,o}([x; h]))    g = tanh(conv_g([x; h]))
    c' = f * c + i * g                         h' = o * tanh(c')

step() returns a context for the matching step_backward(), which
accumulates gate-parameter gradients; driving it from the last step to
the first implements BPTT across a frame sequence.
"""

import numpy as np

from . import ops
from .layers import ConvLayer

GATES = ("i", "f", "o", "g")


class ConvLstmCell:
    def __init__(self, in_channels, hidden_channels, kernel_size, rng=None,
                 dtype=np.float32, name="convlstm"):
        self.in_channels = in_channels
        self.hidden_channels = hidden_channels
        self.name = name
        self.gates = [
            ConvLayer(in_channels + hidden_channels, hidden_channels, kernel_size,
                      rng=rng, dtype=dtype, name=f"{name}.{g}")
            for g in GATES
        ]

    def init_state(self, n, h, w, dtype=np.float32):
        shape = (n, self.hidden_channels, h, w)
        return np.zeros(shape, dtype=dtype), np.zeros(shape, dtype=dtype)

    def step(self, x, state):
        """One time step; returns (h_new, (h_new, c_new), ctx)."""
        h_prev, c_prev = state
        if x.shape[2:] != h_prev.shape[2:]:
            raise ValueError(f"input {x.shape} does not match state {h_prev.shape}")
        z = ops.concat_channels(x, h_prev)
        gi = ops.sigmoid(self.gates[0].forward(z))
        gf = ops.sigmoid(self.gates[1].forward(z))
        go = ops.sigmoid(self.gates[2].forward(z))
        gg = ops.tanh(self.gates[3].forward(z))
        c = gf * c_prev + gi * gg
        tc = ops.tanh(c)
        h = go * tc
        ctx = (z, gi, gf, go, gg, c_prev, tc)
        return h, (h, c), ctx

    def step_backward(self, ctx, dh, dc):
        """Backward for one step given dL/dh_t and dL/dc_t (from the
        following step); returns (dx, dh_prev, dc_prev)."""
        z, gi, gf, go, gg, c_prev, tc = ctx
        dgo = dh * tc
        dc_total = dc + dh * go * (1.0 - tc * tc)
        dgf = dc_total * c_prev
        dgi = dc_total * gg
        dgg = dc_total * gi
        dc_prev = dc_total * gf
        da = (dgi * gi * (1.0 - gi),
              dgf * gf * (1.0 - gf),
              dgo * go * (1.0 - go),
              dgg * (1.0 - gg * gg))
        dz = None
        for gate, d in zip(self.gates, da):
            g_dz = gate.backward(z, d)
            dz = g_dz if dz is None else dz + g_dz
        dx, dh_prev = ops.split_channels(dz, self.in_channels)
        return dx, dh_prev, dc_prev

    def zero_grad(self):
        for gate in self.gates:
            gate.zero_grad()

    def params(self):
        out = []
        for gate in self.gates:
            out.extend(gate.params())
        return out


def convlstm_step(cell, x, state):
    """Functional step: (h_t, new_state) without retaining the context."""
    h, new_state, _ = cell.step(x, state)
    return h, new_state

"""ADAM optimizer with exponential learning-rate decay and L2 coupling.

The effective rate is base_lr * decay_rate ** (step / decay_steps) with
a continuous exponent (no staircase). The L2 term contributes 2 *
l2_rate * w to each gradient before the moment update. Moments are kept
in float64 regardless of parameter dtype; parameter updates are applied
in place in the parameter's own dtype.
"""

import numpy as np


class AdamState:
    def __init__(self, base_lr=1e-3, decay_rate=0.98, decay_steps=1000,
                 beta1=0.9, beta2=0.999, eps=1e-8, l2_rate=1e-5):
        self.base_lr = base_lr
        self.decay_rate = decay_rate
        self.decay_steps = decay_steps
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.l2_rate = l2_rate
        self.step_count = 0
        self.m = {}
        self.v = {}

    def lr_at(self, step):
        return self.base_lr * self.decay_rate ** (step / self.decay_steps)

    @property
    def lr(self):
        return self.lr_at(self.step_count)


def adam_step(state, params):
    """One bias-corrected update over [(name, value, grad), ...]; values
    are updated in place. Returns the learning rate that was applied."""
    state.step_count += 1
    t = state.step_count
    lr = state.lr_at(t)
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, w, g in params:
        grad = g.astype(np.float64) + 2.0 * state.l2_rate * w.astype(np.float64)
        m = state.m.get(name)
        if m is None:
            m = np.zeros(w.shape, dtype=np.float64)
            state.m[name] = m
            state.v[name] = np.zeros(w.shape, dtype=np.float64)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * np.square(grad)
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        w -= update.astype(w.dtype)
    return lr

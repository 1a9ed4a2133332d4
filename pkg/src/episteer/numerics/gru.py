"""GRU cell over the tape ops."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Parameter, add, affine, as_tensor, mul, reshape, sigmoid, sub, tanh


@dataclass
class GruWeights:
    """Gate weights; input matrices are (hidden, input), recurrent ones (hidden, hidden)."""

    w_z: Parameter
    w_r: Parameter
    w_h: Parameter
    u_z: Parameter
    u_r: Parameter
    u_h: Parameter
    b_z: Parameter
    b_r: Parameter
    b_h: Parameter

    def __post_init__(self):
        if not (self.w_z.shape == self.w_r.shape == self.w_h.shape):
            raise ValueError("input-to-hidden gate blocks differ in shape")
        if not (self.u_z.shape == self.u_r.shape == self.u_h.shape):
            raise ValueError("hidden-to-hidden gate blocks differ in shape")
        if not (self.b_z.shape == self.b_r.shape == self.b_h.shape):
            raise ValueError("gate biases differ in shape")
        hidden, _ = self.w_z.shape
        if self.u_z.shape != (hidden, hidden) or self.b_z.shape != (hidden,):
            raise ValueError("recurrent weights or biases do not match the hidden size")

    @property
    def input_size(self):
        return self.w_z.shape[1]

    @property
    def hidden_size(self):
        return self.w_z.shape[0]

    def parameters(self):
        return [self.w_z, self.w_r, self.w_h, self.u_z, self.u_r, self.u_h, self.b_z, self.b_r, self.b_h]

    @classmethod
    def init(cls, input_size, hidden_size, rng, prefix="gru", scale=None):
        """Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) init, zero biases."""
        bound = scale if scale is not None else 1.0 / np.sqrt(hidden_size)

        def mat(name, rows, cols):
            return Parameter(rng.uniform(-bound, bound, size=(rows, cols)), name=f"{prefix}.{name}")

        def vec(name):
            return Parameter(np.zeros(hidden_size), name=f"{prefix}.{name}")

        return cls(
            mat("w_z", hidden_size, input_size),
            mat("w_r", hidden_size, input_size),
            mat("w_h", hidden_size, input_size),
            mat("u_z", hidden_size, hidden_size),
            mat("u_r", hidden_size, hidden_size),
            mat("u_h", hidden_size, hidden_size),
            vec("b_z"),
            vec("b_r"),
            vec("b_h"),
        )

    @classmethod
    def zeros(cls, input_size, hidden_size, prefix="gru"):
        def p(name, shape):
            return Parameter(np.zeros(shape), name=f"{prefix}.{name}")

        hi, hh, b = (hidden_size, input_size), (hidden_size, hidden_size), (hidden_size,)
        return cls(p("w_z", hi), p("w_r", hi), p("w_h", hi), p("u_z", hh), p("u_r", hh),
                   p("u_h", hh), p("b_z", b), p("b_r", b), p("b_h", b))


def gru_cell(x, h, w: GruWeights):
    """One GRU step.

    ``x`` is (input,) or (batch, input); ``h`` matches with the hidden size.
    z = sig(Wz x + Uz h + bz), r = sig(Wr x + Ur h + br),
    h~ = tanh(Wh x + Uh (r*h) + bh), h' = (1 - z) * h + z * h~.
    """
    x, h = as_tensor(x), as_tensor(h)
    vector = x.value.ndim == 1
    if vector:
        x = reshape(x, (1, -1))
        h = reshape(h, (1, -1))
    if x.value.shape[1] != w.input_size:
        raise ValueError(f"input has {x.value.shape[1]} features, GRU expects {w.input_size}")
    if h.value.shape[1] != w.hidden_size or h.value.shape[0] != x.value.shape[0]:
        raise ValueError(f"hidden state {h.value.shape} does not fit GRU hidden size {w.hidden_size}")
    z = sigmoid(add(affine(x, w.w_z, w.b_z), affine(h, w.u_z)))
    r = sigmoid(add(affine(x, w.w_r, w.b_r), affine(h, w.u_r)))
    cand = tanh(add(affine(x, w.w_h, w.b_h), affine(mul(r, h), w.u_h)))
    # (1 - z) * h + z * cand == h + z * (cand - h)
    out = add(h, mul(z, sub(cand, h)))
    if vector:
        out = reshape(out, (-1,))
    return out


def gru_sequence(xs, h0, w: GruWeights):
    """Run the cell over a list of per-step inputs; returns every hidden state."""
    h = h0
    states = []
    for x in xs:
        h = gru_cell(x, h, w)
        states.append(h)
    return states

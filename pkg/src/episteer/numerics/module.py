"""Parameter containers and dense layers."""

from __future__ import annotations

import numpy as np

from .gru import GruWeights
from .tensor import Parameter, affine


class Module:
    """Collects Parameters from attributes (directly, in lists, or in child modules)."""

    def named_parameters(self, prefix=""):
        seen = set()
        for key, val in vars(self).items():
            for name, p in _walk(val, f"{prefix}{key}"):
                if id(p) not in seen:
                    seen.add(id(p))
                    yield name, p

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def state_dict(self):
        return {name: p.value.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state, strict=True):
        own = dict(self.named_parameters())
        if strict:
            missing = set(own) - set(state)
            extra = set(state) - set(own)
            if missing or extra:
                raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, value in state.items():
            if name in own:
                own[name].assign(value)

    def freeze(self):
        for p in self.parameters():
            p.freeze()

    def unfreeze(self):
        for p in self.parameters():
            p.unfreeze()

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def num_parameters(self):
        return sum(p.value.size for p in self.parameters())


def _walk(val, name):
    if isinstance(val, Parameter):
        yield name, val
    elif isinstance(val, Module):
        yield from val.named_parameters(prefix=name + ".")
    elif isinstance(val, GruWeights):
        for field in ("w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h"):
            yield f"{name}.{field}", getattr(val, field)
    elif isinstance(val, (list, tuple)):
        for i, item in enumerate(val):
            yield from _walk(item, f"{name}.{i}")


class Linear(Module):
    """Affine map with weight of shape (out, in)."""

    def __init__(self, n_in, n_out, rng=None, zero=False):
        if zero or rng is None:
            w = np.zeros((n_out, n_in))
        else:
            bound = 1.0 / np.sqrt(n_in)
            w = rng.uniform(-bound, bound, size=(n_out, n_in))
        self.weight = Parameter(w)
        self.bias = Parameter(np.zeros(n_out))

    @property
    def n_in(self):
        return self.weight.shape[1]

    @property
    def n_out(self):
        return self.weight.shape[0]

    def __call__(self, x):
        return affine(x, self.weight, self.bias)

    def set_identity(self):
        n_out, n_in = self.weight.shape
        if n_out != n_in:
            raise ValueError("identity init needs a square layer")
        self.weight.assign(np.eye(n_in))
        self.bias.assign(np.zeros(n_out))

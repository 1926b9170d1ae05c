# model/optim.py
# Adam with bias correction, as a pure function over a parameter dict.
#
#   m_t = b1 * m_{t-1} + (1 - b1) * g
#   v_t = b2 * v_{t-1} + (1 - b2) * g^2
#   theta_t = theta_{t-1} - lr * m_hat / (sqrt(v_hat) + eps)

from dataclasses import dataclass

import numpy as np

from model.network import ParamSet

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass(frozen=True)
class AdamState:
    params: ParamSet
    m: ParamSet
    v: ParamSet
    t: int = 0

    @classmethod
    def initial(cls, params: ParamSet) -> "AdamState":
        return cls(
            params={k: np.array(p, dtype=np.float64, copy=True) for k, p in params.items()},
            m={k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()},
            v={k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()},
            t=0,
        )


def adam_step(state: AdamState, grads: ParamSet, lr: float) -> AdamState:
    if set(grads) != set(state.params):
        raise ValueError(f"gradient keys {sorted(grads)} do not match parameters {sorted(state.params)}")
    for k, p in state.params.items():
        if np.shape(grads[k]) != p.shape:
            raise ValueError(f"shape mismatch for '{k}': gradient {np.shape(grads[k])}, parameter {p.shape}")

    t = state.t + 1
    c1 = 1.0 - BETA1 ** t
    c2 = 1.0 - BETA2 ** t
    params, m, v = {}, {}, {}
    for k, p in state.params.items():
        g = np.asarray(grads[k], dtype=np.float64)
        m[k] = BETA1 * state.m[k] + (1.0 - BETA1) * g
        v[k] = BETA2 * state.v[k] + (1.0 - BETA2) * g * g
        params[k] = p - lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + EPS)
    return AdamState(params=params, m=m, v=v, t=t)

# model/network.py
"""
Static front end + single-layer LSTM + dropout + linear head, in numpy.

Two front-end modes:

* ``joint-mlp``: x_t = tanh(W_fe [dyn_t, static] + b_fe), fed to the LSTM.
* ``attr-fc``:   e = tanh(W_fe static + b_fe); x_t = [dyn_t, e].

The LSTM gate blocks are stacked in the order input, forget, cell, output.
Dropout acts on the final hidden state with the inverted convention, so
inference is the identity.
"""

from dataclasses import asdict, dataclass
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import expit

from configs.columns import ATTRIBUTES, FORCING_COLS

FRONTEND_MODES = ("joint-mlp", "attr-fc")
PARAM_NAMES = ("W_fe", "b_fe", "W", "U", "b", "w_head", "b_head")

# windows per gradient chunk; bounds the BPTT cache size
GRAD_CHUNK = 64

ParamSet = Dict[str, np.ndarray]


@dataclass(frozen=True)
class ModelConfig:
    n_dyn: int = len(FORCING_COLS)
    n_static: int = 17
    frontend_mode: str = "joint-mlp"
    frontend_width: int = 32
    hidden_size: int = 128
    dropout: float = 0.4
    seq_length: int = 365
    batch_size: int = 256
    learning_rate: float = 1e-3
    epochs: int = 30
    seed: int = 0
    static_kind: str = ATTRIBUTES
    val_fraction: float = 0.2

    def __post_init__(self):
        for name in ("n_dyn", "n_static", "frontend_width", "hidden_size", "seq_length", "batch_size", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.frontend_mode not in FRONTEND_MODES:
            raise ValueError(f"frontend mode must be one of {FRONTEND_MODES}, got '{self.frontend_mode}'")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")

    @property
    def input_width(self) -> int:
        return self.n_dyn + self.n_static

    @property
    def lstm_input_width(self) -> int:
        if self.frontend_mode == "joint-mlp":
            return self.frontend_width
        return self.n_dyn + self.frontend_width

    def replace(self, **changes) -> "ModelConfig":
        values = asdict(self)
        values.update(changes)
        return ModelConfig(**values)

    def to_dict(self) -> dict:
        return asdict(self)


def param_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    H, F = config.hidden_size, config.frontend_width
    fe_in = config.input_width if config.frontend_mode == "joint-mlp" else config.n_static
    return {
        "W_fe": (F, fe_in),
        "b_fe": (F,),
        "W": (4 * H, config.lstm_input_width),
        "U": (4 * H, H),
        "b": (4 * H,),
        "w_head": (H,),
        "b_head": (1,),
    }


def init_bounds(config: ModelConfig) -> Dict[str, float]:
    shapes = param_shapes(config)
    fe = 1.0 / np.sqrt(shapes["W_fe"][1])
    inp = 1.0 / np.sqrt(shapes["W"][1])
    rec = 1.0 / np.sqrt(config.hidden_size)
    # gate biases and the head take the recurrent fan-in
    return {"W_fe": fe, "b_fe": fe, "W": inp, "U": rec, "b": rec, "w_head": rec, "b_head": rec}


def init_params(config: ModelConfig, seed: int) -> ParamSet:
    """Uniform in +-1/sqrt(fan-in) per layer; forget-gate bias set to +1."""
    rng = np.random.default_rng(seed)
    bounds = init_bounds(config)
    params = {}
    for name, shape in param_shapes(config).items():
        params[name] = rng.uniform(-bounds[name], bounds[name], size=shape)
    H = config.hidden_size
    params["b"][H:2 * H] = 1.0
    return params


def zeros_like_params(params: ParamSet) -> ParamSet:
    return {k: np.zeros_like(v) for k, v in params.items()}


def check_shapes(config: ModelConfig, params: ParamSet) -> None:
    for name, shape in param_shapes(config).items():
        if name not in params:
            raise ValueError(f"missing parameter '{name}'")
        if params[name].shape != shape:
            raise ValueError(f"parameter '{name}' has shape {params[name].shape}, expected {shape}")


def _as_batch(dyn, static) -> Tuple[np.ndarray, np.ndarray, bool]:
    dyn = np.asarray(dyn, dtype=np.float64)
    static = np.asarray(static, dtype=np.float64)
    single = dyn.ndim == 2
    if single:
        dyn, static = dyn[None], static[None]
    if dyn.ndim != 3 or static.ndim != 2 or dyn.shape[0] != static.shape[0]:
        raise ValueError(f"bad input shapes: dyn {dyn.shape}, static {static.shape}")
    if not np.all(np.isfinite(dyn)):
        raise ValueError("missing forcing value inside window")
    if not np.all(np.isfinite(static)):
        raise ValueError("missing value in static vector")
    return dyn, static, single


def _run(params: ParamSet, config: ModelConfig, dyn: np.ndarray, static: np.ndarray,
         mask: Optional[np.ndarray], keep: bool):
    B, T, _ = dyn.shape
    H = config.hidden_size
    W_fe, b_fe, W, U, b = params["W_fe"], params["b_fe"], params["W"], params["U"], params["b"]

    cache = {}
    if config.frontend_mode == "joint-mlp":
        Z = np.concatenate([dyn, np.broadcast_to(static[:, None, :], (B, T, static.shape[1]))], axis=2)
        X = np.tanh(Z @ W_fe.T + b_fe)
        if keep:
            cache["Z"] = Z
    else:
        e = np.tanh(static @ W_fe.T + b_fe)
        X = np.concatenate([dyn, np.broadcast_to(e[:, None, :], (B, T, e.shape[1]))], axis=2)
        if keep:
            cache["e"] = e
    XW = X @ W.T + b

    h = np.zeros((B, H))
    c = np.zeros((B, H))
    if keep:
        hs = np.empty((T + 1, B, H))
        cs = np.empty((T + 1, B, H))
        gates = np.empty((T, 4, B, H))
        hs[0], cs[0] = h, c

    for t in range(T):
        a = XW[:, t] + h @ U.T
        i = expit(a[:, :H])
        f = expit(a[:, H:2 * H])
        g = np.tanh(a[:, 2 * H:3 * H])
        o = expit(a[:, 3 * H:])
        c = f * c + i * g
        h = o * np.tanh(c)
        if keep:
            hs[t + 1], cs[t + 1] = h, c
            gates[t, 0], gates[t, 1], gates[t, 2], gates[t, 3] = i, f, g, o

    hd = h * mask if mask is not None else h
    y = hd @ params["w_head"] + params["b_head"][0]
    if keep:
        cache.update(X=X, hs=hs, cs=cs, gates=gates, hd=hd, mask=mask)
    return y, cache


def forward(params: ParamSet, config: ModelConfig, dyn, static, dropout_mask=None):
    """
    Predicted standardized flow at the final day of each window.

    ``dyn`` is (T, n_dyn) or (B, T, n_dyn); ``static`` is (n_static,) or
    (B, n_static). ``dropout_mask`` (B, hidden) holds 0 or 1/(1-p) entries.
    """
    dyn, static, single = _as_batch(dyn, static)
    mask = None if dropout_mask is None else np.asarray(dropout_mask, dtype=np.float64).reshape(dyn.shape[0], -1)
    y, _ = _run(params, config, dyn, static, mask, keep=False)
    return float(y[0]) if single else y


def hidden_states(params: ParamSet, config: ModelConfig, dyn, static) -> np.ndarray:
    """All hidden states (T, B, hidden) of one forward pass."""
    dyn, static, _ = _as_batch(dyn, static)
    _, cache = _run(params, config, dyn, static, None, keep=True)
    return cache["hs"][1:]


def _backward(params: ParamSet, config: ModelConfig, dyn: np.ndarray, static: np.ndarray,
              cache: dict, dy: np.ndarray) -> ParamSet:
    B, T, _ = dyn.shape
    H = config.hidden_size
    W, U = params["W"], params["U"]
    hs, cs, gates, X = cache["hs"], cache["cs"], cache["gates"], cache["X"]

    grads = {"w_head": cache["hd"].T @ dy, "b_head": np.array([dy.sum()])}

    dh = dy[:, None] * params["w_head"][None, :]
    if cache["mask"] is not None:
        dh = dh * cache["mask"]
    dc = np.zeros((B, H))
    DA = np.empty((B, T, 4 * H))
    dU = np.zeros_like(U)

    for t in range(T - 1, -1, -1):
        i, f, g, o = gates[t]
        tc = np.tanh(cs[t + 1])
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * cs[t]
        da = np.concatenate([di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g * g), do * o * (1.0 - o)], axis=1)
        DA[:, t] = da
        dU += da.T @ hs[t]
        dh = da @ U
        dc = dc * f

    flat_da = DA.reshape(B * T, 4 * H)
    grads["W"] = flat_da.T @ X.reshape(B * T, -1)
    grads["U"] = dU
    grads["b"] = flat_da.sum(axis=0)
    dX = DA @ W

    if config.frontend_mode == "joint-mlp":
        dpre = dX * (1.0 - X * X)
        F = dpre.shape[2]
        grads["W_fe"] = dpre.reshape(B * T, F).T @ cache["Z"].reshape(B * T, -1)
        grads["b_fe"] = dpre.reshape(B * T, F).sum(axis=0)
    else:
        e = cache["e"]
        de = dX[:, :, config.n_dyn:].sum(axis=1)
        dpre = de * (1.0 - e * e)
        grads["W_fe"] = dpre.T @ static
        grads["b_fe"] = dpre.sum(axis=0)
    return grads


def loss_and_grad(params: ParamSet, config: ModelConfig, dyn, static, target,
                  dropout_mask=None, chunk: int = GRAD_CHUNK) -> Tuple[float, ParamSet]:
    """Mean squared error over the batch and its exact gradient (BPTT)."""
    dyn, static, _ = _as_batch(dyn, static)
    target = np.asarray(target, dtype=np.float64).reshape(-1)
    mask = None if dropout_mask is None else np.asarray(dropout_mask, dtype=np.float64).reshape(dyn.shape[0], -1)

    keep = np.isfinite(target)
    if not keep.all():
        dyn, static, target = dyn[keep], static[keep], target[keep]
        mask = None if mask is None else mask[keep]
    n = target.size
    if n == 0:
        raise ValueError("empty effective batch")

    grads = zeros_like_params(params)
    sq_err = 0.0
    # fixed chunk order keeps the summation deterministic
    for start in range(0, n, chunk):
        sl = slice(start, start + chunk)
        m = None if mask is None else mask[sl]
        y, cache = _run(params, config, dyn[sl], static[sl], m, keep=True)
        resid = y - target[sl]
        sq_err += float(np.sum(resid * resid))
        part = _backward(params, config, dyn[sl], static[sl], cache, 2.0 * resid / n)
        for k in grads:
            grads[k] += part[k]
    return sq_err / n, grads


def dropout_mask(rng: np.random.Generator, batch: int, hidden: int, rate: float) -> Optional[np.ndarray]:
    if rate <= 0:
        return None
    return (rng.uniform(size=(batch, hidden)) >= rate) / (1.0 - rate)


def frontend_embedding(params: ParamSet, config: ModelConfig, static) -> np.ndarray:
    """Post-activation attr-fc front end for standardized static rows."""
    if config.frontend_mode != "attr-fc":
        raise ValueError("joint-mlp front end mixes forcings and attributes; no attribute embedding exists")
    static = np.atleast_2d(np.asarray(static, dtype=np.float64))
    return np.tanh(static @ params["W_fe"].T + params["b_fe"])

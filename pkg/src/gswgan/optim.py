"""Adam, RMSProp (uncentered) and SGD acting in place on a flat parameter buffer."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, ShapeError

KINDS = ("adam", "rmsprop", "sgd")


@dataclass
class OptimizerState:
    kind: str
    lr: float
    beta1: float = 0.9
    beta2: float = 0.99
    rho: float = 0.9
    eps: float = 1e-8
    t: int = 0
    m: np.ndarray | None = field(default=None, repr=False)
    v: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"optimizer kind must be one of {KINDS}, got {self.kind!r}")
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")


def make_optimizer(settings: dict) -> OptimizerState:
    return OptimizerState(**settings)


def _flat_view(params):
    # ndarrays also have a .flat attribute (an iterator), so test the type
    return params if isinstance(params, np.ndarray) else params.flat


def _flat_grads(grads, size):
    if grads is None:
        raise ValueError("missing gradients")
    if isinstance(grads, np.ndarray):
        g = grads.ravel()
    else:
        if any(x is None for x in grads):
            raise ValueError("missing gradient for a parameter")
        g = np.concatenate([np.asarray(x).ravel() for x in grads])
    if g.shape != (size,):
        raise ShapeError(f"gradient has {g.size} entries, parameters have {size}")
    return g


def step(state: OptimizerState, params, grads):
    """Apply one update in place and return ``params``.

    ``params`` is an ``MlpParams`` (its flat buffer is updated) or a 1-d
    array; ``grads`` is a matching flat array or a list of per-array
    gradients in flat-buffer order.
    """
    theta = _flat_view(params)
    g = _flat_grads(grads, theta.size)
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite gradient")
    state.t += 1
    if state.kind == "sgd":
        theta -= state.lr * g
        return params
    if state.m is None and state.kind == "adam":
        state.m = np.zeros_like(theta)
    if state.v is None:
        state.v = np.zeros_like(theta)
    if state.kind == "adam":
        b1, b2 = state.beta1, state.beta2
        state.m *= b1
        state.m += (1.0 - b1) * g
        state.v *= b2
        state.v += (1.0 - b2) * (g * g)
        m_hat = state.m / (1.0 - b1 ** state.t)
        v_hat = state.v / (1.0 - b2 ** state.t)
        theta -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    else:
        state.v *= state.rho
        state.v += (1.0 - state.rho) * (g * g)
        theta -= state.lr * g / (np.sqrt(state.v) + state.eps)
    return params

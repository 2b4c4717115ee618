"""MLP generators and GroupSort critics, plus the Lipschitz projections.

Weight matrices are stored ``fan_in x fan_out`` so a batch ``x`` (rows are
samples) maps to ``x @ w + b``. All parameters of one network live in a single
flat float64 buffer; ``weights[i]`` and ``biases[i]`` are views into it, which
lets the optimizers update everything with a handful of vector ops.
"""

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import autodiff as ad
from .errors import ConfigError, FormatError, NumericError, ShapeError

HIDDEN_ACTIVATIONS = ("relu", "groupsort2")
OUTPUT_ACTIVATIONS = ("none", "tanh")
CONSTRAINTS = ("none", "bjorck", "inf_norm", "clip")


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_dim: int
    width: int
    depth: int
    hidden_activation: str = "relu"
    output_activation: str = "none"
    constraint: str = "none"
    clip_bound: float = 0.01
    bjorck_steps: int = 5
    bjorck_order: int = 2

    def __post_init__(self):
        for name in ("input_dim", "output_dim", "width", "depth"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.depth < 2:
            raise ConfigError(f"depth must be >= 2, got {self.depth}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ConfigError(f"hidden_activation must be one of {HIDDEN_ACTIVATIONS}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ConfigError(f"output_activation must be one of {OUTPUT_ACTIVATIONS}")
        if self.constraint not in CONSTRAINTS:
            raise ConfigError(f"constraint must be one of {CONSTRAINTS}")
        if self.hidden_activation == "groupsort2" and self.width % 2:
            raise ConfigError(f"groupsort2 needs an even width, got {self.width}")
        if self.constraint == "clip" and not self.clip_bound > 0:
            raise ConfigError(f"clip_bound must be > 0, got {self.clip_bound}")
        if self.bjorck_steps < 1 or self.bjorck_order not in (1, 2):
            raise ConfigError("bjorck_steps must be >= 1 and bjorck_order in {1, 2}")

    @property
    def layer_dims(self) -> list[int]:
        return [self.input_dim] + [self.width] * (self.depth - 1) + [self.output_dim]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown MlpSpec keys: {sorted(extra)}")
        return cls(**d)


class MlpParams:
    def __init__(self, spec: MlpSpec, flat: np.ndarray | None = None):
        self.spec = spec
        dims = spec.layer_dims
        shapes = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            shapes.append((fan_in, fan_out))
            shapes.append((1, fan_out))
        size = sum(a * b for a, b in shapes)
        if flat is None:
            flat = np.zeros(size)
        elif flat.shape != (size,):
            raise ShapeError(f"flat buffer has {flat.shape}, expected ({size},)")
        self.flat = flat
        self.weights, self.biases = [], []
        pos = 0
        for k, (a, b) in enumerate(shapes):
            view = flat[pos:pos + a * b].reshape(a, b)
            (self.weights if k % 2 == 0 else self.biases).append(view)
            pos += a * b

    def arrays(self) -> list[np.ndarray]:
        """Weights and biases interleaved, in flat-buffer order."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(self.spec, self.flat.copy())

    def watch(self, tape: ad.Tape) -> list[ad.Tensor]:
        return [tape.leaf(a) for a in self.arrays()]

    def to_dict(self, step: int = 0, seed: int | None = None) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.ravel().tolist() for b in self.biases],
            "step": int(step),
            "seed": seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpParams":
        try:
            params = cls(MlpSpec.from_dict(d["spec"]))
            if len(d["weights"]) != len(params.weights) or len(d["biases"]) != len(params.biases):
                raise FormatError("checkpoint layer count does not match its spec")
            for dst, src in zip(params.weights, d["weights"]):
                dst[...] = np.asarray(src, dtype=np.float64)
            for dst, src in zip(params.biases, d["biases"]):
                dst[...] = np.asarray(src, dtype=np.float64).reshape(dst.shape)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"bad checkpoint: {exc}") from exc
        return params


def save_checkpoint(params: MlpParams, path, step: int = 0, seed: int | None = None) -> None:
    # float repr is the shortest string that round-trips, so reloads are value-exact
    with open(path, "w") as fh:
        json.dump(params.to_dict(step, seed), fh)


def load_checkpoint(path) -> tuple[MlpParams, dict]:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from exc
    return MlpParams.from_dict(d), {"step": d.get("step", 0), "seed": d.get("seed")}


def init_params(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
    """Glorot-uniform weights, zero biases, constraint applied once."""
    params = MlpParams(spec)
    for w in params.weights:
        fan_in, fan_out = w.shape
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    apply_constraint(params)
    return params


def forward(params: MlpParams, x, leaves: list[ad.Tensor] | None = None) -> ad.Tensor:
    """Evaluate the network on a batch.

    Pass ``leaves`` (from ``params.watch(tape)``) to record parameter
    gradients; otherwise the weights enter as constants.
    """
    spec = params.spec
    x = x if isinstance(x, ad.Tensor) else ad.Tensor(x)
    if x.cols != spec.input_dim:
        raise ShapeError(f"input has {x.cols} columns, network expects {spec.input_dim}")
    arrays = leaves if leaves is not None else params.arrays()
    act = ad.relu if spec.hidden_activation == "relu" else ad.groupsort2
    h = x
    last = len(arrays) // 2 - 1
    for i in range(last + 1):
        h = ad.affine(h, arrays[2 * i], arrays[2 * i + 1])
        if i < last:
            h = act(h)
    if spec.output_activation == "tanh":
        h = ad.tanh_act(h)
    return h


def sample(params: MlpParams, z: np.ndarray) -> np.ndarray:
    """Plain numpy forward pass, no tape."""
    return forward(params, z).data


def bjorck_orthonormalize(w: np.ndarray, steps: int = 5, order: int = 2) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise NumericError("bjorck_orthonormalize: non-finite input")
    if steps < 1 or order not in (1, 2):
        raise ConfigError("steps must be >= 1 and order in {1, 2}")
    p, q = w.shape
    tall = p >= q
    gram = w.T @ w if tall else w @ w.T
    # Both sqrt(||w||_1 ||w||_inf) and sqrt(||gram||_inf) bound the spectral
    # norm; scaling by the smaller one puts every singular value in (0, 1],
    # where the iteration rises monotonically to 1. The Gram bound is ~1 for a
    # nearly orthonormal matrix, so re-projecting one barely moves it.
    bound = min(math.sqrt(np.abs(w).sum(axis=0).max() * np.abs(w).sum(axis=1).max()),
                math.sqrt(np.abs(gram).sum(axis=1).max()))
    if bound == 0.0:
        return w.copy()
    a = w / bound
    gram = gram / (bound * bound)
    eye = np.eye(q if tall else p)
    for i in range(steps):
        if i:
            gram = a.T @ a if tall else a @ a.T
        r = eye - gram
        poly = eye + 0.5 * r
        if order == 2:
            poly += 0.375 * (r @ r)
        a = a @ poly if tall else poly @ a
    return a


def spectral_norm_estimate(w: np.ndarray, iters: int = 50, rng: np.random.Generator | None = None,
                           tol: float = 0.0) -> float:
    """Power iteration on ``w.T @ w``; never over-estimates the true norm.

    With ``tol > 0`` the loop stops early once the estimate changes by less
    than ``tol`` relative.
    """
    if iters < 1:
        raise ConfigError("iters must be >= 1")
    w = np.asarray(w, dtype=np.float64)
    if not np.any(w):
        return 0.0
    if rng is None:
        rng = np.random.default_rng(0)
    v = rng.standard_normal(w.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        u = w @ v
        v_next = w.T @ u
        nrm = np.linalg.norm(v_next)
        if nrm == 0.0:
            # start vector fell in the null space; restart on a fresh direction
            v = rng.standard_normal(w.shape[1])
            v /= np.linalg.norm(v)
            continue
        v = v_next / nrm
        prev, est = est, float(np.linalg.norm(w @ v))
        if tol > 0 and abs(est - prev) <= tol * est:
            break
    return float(np.linalg.norm(w @ v))


def project_inf_norm(params: MlpParams) -> MlpParams:
    """Mixed-norm projection for GroupSort critics.

    Layer 1: every output unit's incoming weight vector (a column here) is
    scaled to l2 norm <= 1, giving ||V1||_{2,inf} <= 1. Later layers: every
    column scaled to l1 norm <= 1, giving ||Vi||_inf <= 1.
    """
    for i, w in enumerate(params.weights):
        if i == 0:
            norms = np.sqrt((w * w).sum(axis=0))
        else:
            norms = np.abs(w).sum(axis=0)
        w /= np.maximum(1.0, norms)
    return params


def clip_weights(params: MlpParams, c: float) -> MlpParams:
    if not c > 0:
        raise ConfigError(f"clip bound must be > 0, got {c}")
    np.clip(params.flat, -c, c, out=params.flat)
    return params


def cap_generator_norm(params: MlpParams, m_bound: float, iters: int = 200) -> MlpParams:
    """Rescale so ||W_i||_2 <= m_bound and ||b_i||_2 <= m_bound for every layer."""
    if not m_bound > 0:
        raise ConfigError(f"norm bound must be > 0, got {m_bound}")
    for w, b in zip(params.weights, params.biases):
        s = spectral_norm_estimate(w, iters=iters, tol=1e-15)
        if s > m_bound:
            w *= m_bound / s
        nb = float(np.linalg.norm(b))
        if nb > m_bound:
            b *= m_bound / nb
    return params


def apply_constraint(params: MlpParams) -> MlpParams:
    spec = params.spec
    if spec.constraint == "bjorck":
        for w in params.weights:
            w[...] = bjorck_orthonormalize(w, spec.bjorck_steps, spec.bjorck_order)
    elif spec.constraint == "inf_norm":
        project_inf_norm(params)
    elif spec.constraint == "clip":
        clip_weights(params, spec.clip_bound)
    return params


def check_constraint(params: MlpParams, slack: float | None = None) -> bool:
    """True when the network satisfies its constraint invariant."""
    spec = params.spec
    if spec.constraint == "bjorck":
        slack = 1e-3 if slack is None else slack
        return all(np.linalg.norm(w, 2) <= 1 + slack for w in params.weights)
    if spec.constraint == "inf_norm":
        slack = 1e-9 if slack is None else slack
        first = np.sqrt((params.weights[0] ** 2).sum(axis=0)).max()
        rest = [np.abs(w).sum(axis=0).max() for w in params.weights[1:]]
        return first <= 1 + slack and all(r <= 1 + slack for r in rest)
    if spec.constraint == "clip":
        return float(np.abs(params.flat).max()) <= spec.clip_bound
    return True

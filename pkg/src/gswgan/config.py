"""JSON experiment configuration with strict key checking.

Every config object is a dataclass; :func:`train_config_from_dict` rebuilds it from parsed
JSON, rejecting unknown keys and wrong types with the dotted key path in the
error message. A top-level ``"preset"`` key selects the base values that the
remaining keys override.
"""

import copy
import json
import types
import typing
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace

from .errors import ConfigError
from .networks import MlpSpec

DATASET_DIMS = {"swiss_roll": 2, "mnist": 784}


@dataclass
class GeneratorConfig:
    width: int = 30
    depth: int = 2
    output_activation: str = "none"
    norm_cap: float | None = None


@dataclass
class DiscriminatorConfig:
    width: int = 30
    depth: int = 2
    hidden_activation: str = "groupsort2"
    constraint: str = "bjorck"
    bjorck_steps: int = 5
    bjorck_order: int = 2
    clip_bound: float = 0.01


@dataclass
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.99
    rho: float = 0.9
    eps: float = 1e-8


@dataclass
class EvalConfig:
    every: int = 1000
    samples: int = 2000
    exact_every: int = 0  # 0: exact W1 at iteration 0 and at the end only
    sliced_projections: int = 64
    tail_threshold: float = 2.0
    keep_checkpoints: bool = True


@dataclass
class MnistConfig:
    images: str = "train-images-idx3-ubyte"
    labels: str = "train-labels-idx1-ubyte"
    pca_dim: int = 50
    holdout: int = 10000


@dataclass
class TrainConfig:
    dataset: str = "swiss_roll"
    seed: int = 0
    n_train: int = 2000
    batch_size: int = 100
    total_iterations: int = 10000
    critic_steps: int = 5
    noise_dim: int = 2
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    generator_optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    discriminator_optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    mnist: MnistConfig = field(default_factory=MnistConfig)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.dataset not in DATASET_DIMS:
            raise ConfigError(f"dataset: must be one of {sorted(DATASET_DIMS)}, got {self.dataset!r}")
        if self.critic_steps < 1:
            raise ConfigError("critic_steps: must be >= 1")
        if self.batch_size < 1 or self.batch_size > self.n_train:
            raise ConfigError(f"batch_size: must be in [1, n_train={self.n_train}], got {self.batch_size}")
        if self.total_iterations < 0:
            raise ConfigError("total_iterations: must be >= 0")
        if self.noise_dim < 1:
            raise ConfigError("noise_dim: must be >= 1")
        if self.eval.every < 1 or self.eval.samples < 1 or self.eval.exact_every < 0:
            raise ConfigError("eval: every and samples must be >= 1, exact_every >= 0")
        if self.generator.norm_cap is not None and not self.generator.norm_cap > 0:
            raise ConfigError("generator.norm_cap: must be > 0 or null")
        # surfaces architecture errors at load time
        self.generator_spec()
        self.discriminator_spec()

    @property
    def data_dim(self) -> int:
        return DATASET_DIMS[self.dataset]

    def generator_spec(self) -> MlpSpec:
        g = self.generator
        try:
            return MlpSpec(self.noise_dim, self.data_dim, g.width, g.depth, "relu",
                           g.output_activation, "none")
        except ConfigError as exc:
            raise ConfigError(f"generator: {exc}") from None

    def discriminator_spec(self) -> MlpSpec:
        d = self.discriminator
        try:
            return MlpSpec(self.data_dim, 1, d.width, d.depth, d.hidden_activation, "none",
                           d.constraint, d.clip_bound, d.bjorck_steps, d.bjorck_order)
        except ConfigError as exc:
            raise ConfigError(f"discriminator: {exc}") from None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def preset(name: str) -> TrainConfig:
    """Base configs carrying the hyperparameter tables verbatim."""
    if name == "swiss_roll_groupsort":
        return TrainConfig()
    if name == "swiss_roll_relu_clip":
        rms = OptimizerConfig(kind="rmsprop", lr=5e-5, rho=0.9)
        return TrainConfig(
            discriminator=DiscriminatorConfig(hidden_activation="relu", constraint="clip", clip_bound=0.01),
            generator_optimizer=rms,
            discriminator_optimizer=copy.deepcopy(rms),
        )
    if name == "mnist_groupsort":
        return TrainConfig(
            dataset="mnist",
            n_train=50000,
            batch_size=512,
            total_iterations=20000,
            noise_dim=50,
            generator=GeneratorConfig(width=50, depth=3, output_activation="tanh"),
            discriminator=DiscriminatorConfig(width=50, depth=3),
            generator_optimizer=OptimizerConfig(kind="adam", lr=5e-4, beta1=0.5, beta2=0.99),
            discriminator_optimizer=OptimizerConfig(kind="adam", lr=1e-3, beta1=0.5, beta2=0.99),
            eval=EvalConfig(every=1000, samples=2000, tail_threshold=40.0),
        )
    raise ConfigError(f"preset: unknown preset {name!r}")


PRESETS = ("swiss_roll_groupsort", "swiss_roll_relu_clip", "mnist_groupsort")


def _type_name(tp) -> str:
    return getattr(tp, "__name__", str(tp))


def _coerce(value, tp, path):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected a boolean, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return int(value)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported type {_type_name(tp)}")


def _merge(obj, data: dict, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(type(obj))
    known = {f.name for f in fields(obj)}
    for key in data:
        if key not in known:
            where = f"{path}.{key}" if path else key
            raise ConfigError(f"{where}: unknown key")
    updates = {}
    for f in fields(obj):
        if f.name not in data:
            continue
        where = f"{path}.{f.name}" if path else f.name
        current = getattr(obj, f.name)
        if is_dataclass(current):
            updates[f.name] = _merge(current, data[f.name], where)
        else:
            updates[f.name] = _coerce(data[f.name], hints[f.name], where)
    if isinstance(obj, TrainConfig):
        # validation happens once on the merged result
        merged = copy.copy(obj)
        for k, v in updates.items():
            setattr(merged, k, v)
        return merged
    return replace(obj, **updates)


def train_config_from_dict(data: dict, path: str = "") -> TrainConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"{path or '<root>'}: expected an object")
    data = dict(data)
    name = data.pop("preset", "swiss_roll_groupsort")
    if not isinstance(name, str):
        raise ConfigError(f"{path + '.' if path else ''}preset: expected a string")
    cfg = _merge(preset(name), data, path)
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"{path + '.' if path else ''}{exc}") from None
    return cfg


def load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None


def load_train_config(path) -> TrainConfig:
    return train_config_from_dict(load_json(path))

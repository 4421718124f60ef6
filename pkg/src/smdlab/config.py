"""JSON experiment configs: schema validation, defaults, and builders.

Every field has a default so ``{}`` is a runnable config; unknown keys
are rejected. ``parse_config(render_config(cfg)) == cfg`` for all valid
configs.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError
from .data import generate_synthetic, load_idx_subset
from .models import MLP, Dataset, LinearModel, Loss, Model, make_loss
from .potentials import Potential, qnorm
from .training import SMDConfig

__all__ = [
    "DatasetConfig",
    "ModelConfig",
    "MirrorConfig",
    "InitConfig",
    "StopConfig",
    "ExperimentConfig",
    "parse_config",
    "render_config",
    "load_config",
    "build_model",
    "build_loss",
    "build_dataset",
    "base_smd_config",
]


@dataclass(frozen=True)
class DatasetConfig:
    type: str = "synthetic"        # "synthetic" | "idx"
    n: int = 10
    seed: int = 0
    n_test: int = 200
    noise: float = 0.0
    images: str = ""               # idx only
    labels: str = ""
    count: int = 50
    classes: tuple[int, int] = (0, 1)


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "mlp"              # "linear" | "mlp"
    d: int = 17                    # linear only
    widths: tuple[int, ...] = (17, 21, 1)
    output_bias: bool = True


@dataclass(frozen=True)
class MirrorConfig:
    q: float = 2.0
    eta: float | None = None       # None = auto-tune


@dataclass(frozen=True)
class InitConfig:
    seeds: tuple[int, ...] = (1, 2, 3, 4)
    scale: float = 0.01


@dataclass(frozen=True)
class StopConfig:
    loss_threshold: float = 1e-13
    max_steps: int = 2_000_000
    accuracy_target: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: str = "square"
    mirrors: tuple[MirrorConfig, ...] = (
        MirrorConfig(q=1.1),
        MirrorConfig(q=2.0),
        MirrorConfig(q=3.0),
        MirrorConfig(q=10.0),
    )
    inits: InitConfig = field(default_factory=InitConfig)
    stop: StopConfig = field(default_factory=StopConfig)
    order: str = "cyclic"
    shuffle_seed: int = 0
    histogram_bins: int = 100
    histogram_tau: float = 1e-3
    out_dir: str = "results"


_SECTIONS = {
    "dataset": DatasetConfig,
    "model": ModelConfig,
    "inits": InitConfig,
    "stop": StopConfig,
}
_SCALARS = {
    "loss": str,
    "order": str,
    "shuffle_seed": int,
    "histogram_bins": int,
    "histogram_tau": float,
    "out_dir": str,
}


def _check_keys(obj: dict, allowed, where: str) -> None:
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _coerce_section(cls, obj: dict, where: str):
    defaults = cls()
    _check_keys(obj, defaults.__dataclass_fields__, where)
    kwargs = {}
    for name, f in defaults.__dataclass_fields__.items():
        if name not in obj:
            continue
        value = obj[name]
        current = getattr(defaults, name)
        if isinstance(current, tuple):
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{where}.{name} must be a list")
            kwargs[name] = tuple(value)
        elif isinstance(current, bool):
            if not isinstance(value, bool):
                raise ConfigError(f"{where}.{name} must be a boolean")
            kwargs[name] = value
        elif isinstance(current, int) and not isinstance(current, bool):
            if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
                raise ConfigError(f"{where}.{name} must be an integer")
            kwargs[name] = int(value)
        elif isinstance(current, float) or current is None:
            if value is not None and not isinstance(value, (int, float)):
                raise ConfigError(f"{where}.{name} must be a number")
            kwargs[name] = None if value is None else float(value)
        else:
            if not isinstance(value, str):
                raise ConfigError(f"{where}.{name} must be a string")
            kwargs[name] = value
    return cls(**kwargs)


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(raw, list(_SECTIONS) + list(_SCALARS) + ["mirrors"], "config")

    kwargs = {}
    for key, cls in _SECTIONS.items():
        if key in raw:
            if not isinstance(raw[key], dict):
                raise ConfigError(f"config.{key} must be an object")
            kwargs[key] = _coerce_section(cls, raw[key], key)
    if "mirrors" in raw:
        if not isinstance(raw["mirrors"], list) or not raw["mirrors"]:
            raise ConfigError("config.mirrors must be a non-empty list")
        kwargs["mirrors"] = tuple(
            _coerce_section(MirrorConfig, m, f"mirrors[{i}]") for i, m in enumerate(raw["mirrors"])
        )
    for key, typ in _SCALARS.items():
        if key in raw:
            value = raw[key]
            if typ is int and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError(f"config.{key} must be an integer")
            if typ is float and not isinstance(value, (int, float)):
                raise ConfigError(f"config.{key} must be a number")
            if typ is str and not isinstance(value, str):
                raise ConfigError(f"config.{key} must be a string")
            kwargs[key] = typ(value)

    cfg = ExperimentConfig(**kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.dataset.type not in ("synthetic", "idx"):
        raise ConfigError(f"unknown dataset type {cfg.dataset.type!r}")
    if cfg.model.kind not in ("linear", "mlp"):
        raise ConfigError(f"unknown model kind {cfg.model.kind!r}")
    if cfg.loss not in ("square", "cross_entropy"):
        raise ConfigError(f"unknown loss {cfg.loss!r}")
    if cfg.order not in ("cyclic", "shuffled"):
        raise ConfigError(f"unknown sampling order {cfg.order!r}")
    if not cfg.inits.seeds:
        raise ConfigError("inits.seeds must not be empty")
    for m in cfg.mirrors:
        if m.q <= 1.0:
            raise ConfigError(f"mirror exponent must exceed 1, got {m.q}")
        if m.eta is not None and m.eta <= 0:
            raise ConfigError("mirror eta must be positive when given")
    if cfg.histogram_bins < 1:
        raise ConfigError("histogram_bins must be >= 1")
    if cfg.stop.max_steps < 1:
        raise ConfigError("stop.max_steps must be >= 1")
    if cfg.stop.loss_threshold < 0:
        raise ConfigError("stop.loss_threshold must be nonnegative")


def render_config(cfg: ExperimentConfig) -> str:
    return json.dumps(asdict(cfg), indent=2) + "\n"


def load_config(path: str | Path) -> ExperimentConfig:
    # missing files surface as OSError (exit code 3 in the CLI)
    return parse_config(Path(path).read_text())


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_model(cfg: ExperimentConfig) -> Model:
    if cfg.model.kind == "linear":
        d = cfg.model.d
        if cfg.dataset.type == "idx":
            d = 784
        return LinearModel(d)
    return MLP(cfg.model.widths, output_bias=cfg.model.output_bias)


def build_loss(cfg: ExperimentConfig) -> Loss:
    return make_loss(cfg.loss)


def build_dataset(cfg: ExperimentConfig, model: Model) -> tuple[Dataset, object]:
    """Returns (dataset, teacher-or-None)."""
    ds = cfg.dataset
    if ds.type == "synthetic":
        data, teacher = generate_synthetic(
            model, ds.n, ds.seed, n_test=ds.n_test, noise=ds.noise
        )
        return data, teacher
    data = load_idx_subset(ds.images, ds.labels, ds.count, tuple(ds.classes))
    if model.d != data.d:
        raise ConfigError(f"model expects d = {model.d}, IDX data has d = {data.d}")
    return data, None


def mirror_potentials(cfg: ExperimentConfig) -> list[Potential]:
    return [qnorm(m.q) for m in cfg.mirrors]


def base_smd_config(cfg: ExperimentConfig) -> SMDConfig:
    return SMDConfig(
        eta=1.0,  # placeholder; per-mirror eta is substituted by the grid
        order=cfg.order,
        seed=cfg.shuffle_seed,
        loss_threshold=cfg.stop.loss_threshold,
        max_steps=cfg.stop.max_steps,
        accuracy_target=cfg.stop.accuracy_target,
    )

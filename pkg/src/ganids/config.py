"""Run configuration: defaults < TOML file < GANIDS_* environment < command-line flags."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError

ENV_PREFIX = "GANIDS_"
# Paths do not influence results, so they stay out of the hash.
UNHASHED = ("input", "work_dir")


@dataclass
class RunConfig:
    task: str = "multiclass"
    input: str = ""
    work_dir: str = "work"
    seed: int = 0
    label_column: str = "label"
    # preprocessing
    val_fraction: float = 0.2
    pearson_threshold: float = 0.5
    pearson_signed: bool = False
    max_categories: int = 32
    # GAN
    gan_steps: int = 5000
    gan_batch_size: int = 32
    gan_lr: float = 0.0002
    gan_beta1: float = 0.5
    gan_output_activation: str = "relu"
    augment_strategy: str = "majority"
    # classifier
    epochs: int = 100
    batch_size: int = 32
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    extra_branches: list = field(default_factory=list)
    # LIME
    lime_samples: int = 5000
    lime_top_k: int = 10
    lime_kernel_width: float = 0.0  # 0 -> 0.75 * sqrt(d)
    lime_perturbation_scale: float = 1.0

    def __post_init__(self):
        if self.task not in ("multiclass", "binary"):
            raise ConfigError(f"task must be 'multiclass' or 'binary', got {self.task!r}")
        if not 0 < self.val_fraction < 1:
            raise ConfigError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.epochs < 0 or self.batch_size < 1 or self.gan_steps < 0 or self.gan_batch_size < 1:
            raise ConfigError("epochs/gan_steps must be >= 0 and batch sizes >= 1")

    def to_dict(self):
        return asdict(self)

    def hashed_dict(self):
        return {k: v for k, v in asdict(self).items() if k not in UNHASHED}

    def config_hash(self):
        blob = json.dumps(self.hashed_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = FIELD_TYPES[key]
    try:
        if kind == "bool":
            if isinstance(value, str):
                low = value.strip().lower()
                if low in ("1", "true", "yes", "on"):
                    return True
                if low in ("0", "false", "no", "off"):
                    return False
                raise ValueError(value)
            return bool(value)
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "list":
            if isinstance(value, str):
                return [int(v) for v in value.replace(",", " ").split()]
            return [int(v) for v in value]
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key {key!r}: cannot interpret {value!r} as {kind}") from exc


def _flatten(doc, out=None):
    out = {} if out is None else out
    for k, v in doc.items():
        if isinstance(v, dict):
            _flatten(v, out)
        else:
            key = k.replace("-", "_")
            out[ALIASES.get(key, key)] = v
    return out


# Alternative spellings accepted in files and the environment.
ALIASES = {"generator_output_activation": "gan_output_activation"}


def load_file(path):
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from exc
    return _flatten(doc)


def from_env(environ=None):
    environ = os.environ if environ is None else environ
    out = {}
    for key in list(FIELD_TYPES) + list(ALIASES):
        name = ENV_PREFIX + key.upper()
        if name in environ:
            out[ALIASES.get(key, key)] = environ[name]
    return out


def resolve(path=None, overrides=None, environ=None):
    """Merge defaults, file, environment and explicit overrides into a RunConfig."""
    merged = {}
    if path:
        merged.update(load_file(path))
    merged.update(from_env(environ))
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(merged) - set(FIELD_TYPES))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return RunConfig(**{k: _coerce(k, v) for k, v in merged.items()})


def stage_seed(seed, stage):
    """Per-stage seed: the global seed XOR a hash of the stage name."""
    h = int.from_bytes(hashlib.sha256(stage.encode()).digest()[:4], "little")
    return (int(seed) ^ h) & 0xFFFFFFFF

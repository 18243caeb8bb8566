"""Run configuration shared by the command-line subcommands.

A run is described by a flat set of keys. They can come from a plain text file with one
`key = value` pair per line (blank lines and lines starting with `#` are ignored) and from
command-line flags, which take precedence. Unknown keys are rejected.
"""

from __future__ import annotations
import logging
import typing
from collections.abc import Mapping
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any

from .data import BallsConfig
from .errors import ConfigError
from .evaluation import DEFAULT_TOP_M, PredictionMode
from .params import ModelSpec
from .trainer import SignalMode, TrainerConfig
from .utils import parse_spec_string, value_to_bool

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


@dataclass(frozen=True)
class RunConfig:
    """Every setting a subcommand may read.

    Trainer hyperparameters default to the values of `TrainerConfig`; the keys below that are
    not self-explanatory are:

    Attributes:
        spec: Compact model description, see `utils.parse_spec_string`.
        balls: Balls per video for gen-balls.
        res: Frame side length for gen-balls.
        length: Frames per sequence for gen-balls and sample.
        num_train: Training videos written by gen-balls.
        num_test: Test videos written by gen-balls.
        num_sequences: Sequences drawn by sample.
        counts_per_frame: Words per sampled frame of a count model.
        samples: Posterior samples S per sequence for predict, elbo and eval-precision.
        top_m: Number of top-ranked words compared by eval-precision.
        fraction: Share of word tokens kept for training by split-words.
    """

    command: str = ""
    seed: int = 0
    threads: int = 1
    log_level: str = "INFO"
    progress: bool = False

    data: Path | None = None
    heldout: Path | None = None
    final: Path | None = None
    ckpt: Path | None = None
    out: Path | None = None
    out_dir: Path | None = None
    metrics: Path | None = None

    spec: str = "J=100,order=1,binary"
    learning_rate: float = 1e-4
    ms_decay: float = 0.95
    momentum: float = 0.9
    weight_decay: float = 1e-4
    epsilon: float = 1e-8
    alpha: float = 0.8
    max_iterations: int = 100_000
    baseline_hidden: int = 100
    use_baseline: bool = True
    use_centering: bool = True
    use_normalization: bool = True
    signal_mode: str = SignalMode.LOCAL.value
    batch_size: int = 1
    hmsbn: bool = False
    log_every: int = 100
    checkpoint_every: int = 0

    balls: int = 3
    res: int = 30
    length: int = 100
    num_train: int = 4000
    num_test: int = 200
    ball_radius: float | None = None
    speed_scale: float | None = None

    num_sequences: int = 1
    counts_per_frame: int = 1
    samples: int = 50
    mode: str = PredictionMode.MEAN.value
    top_m: int = DEFAULT_TOP_M
    fraction: float = 0.8

    def __post_init__(self):
        if self.log_level.upper() not in LOG_LEVELS:
            raise ConfigError(f"log_level must be one of {', '.join(LOG_LEVELS)}.")
        object.__setattr__(self, "log_level", self.log_level.upper())
        for name in ("threads", "samples", "num_sequences", "counts_per_frame", "top_m"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}.")
        if self.seed < 0:
            raise ConfigError(f"seed must be nonnegative, got {self.seed}.")
        try:
            SignalMode(self.signal_mode)
            PredictionMode(self.mode)
        except ValueError as error:
            raise ConfigError(str(error)) from error

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_text(cls, text: str, source: str = "<text>") -> RunConfig:
        """Parse `key = value` lines into a config; keys missing from the text keep defaults."""
        values: dict[str, str] = {}
        for number, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{source}:{number}: expected `key = value`, got {line!r}.")
            values[key.strip()] = value.strip()
        return cls().merged(values)

    @classmethod
    def from_file(cls, path: Path | str) -> RunConfig:
        path = Path(path)
        logger.debug("Reading run configuration from %s", path)
        return cls.from_text(path.read_text(), source=str(path))

    def to_text(self) -> str:
        """Render the config as `key = value` lines that `from_text` reads back unchanged."""
        lines = []
        for key, value in asdict(self).items():
            if value is None:
                continue
            if isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def merged(self, overrides: Mapping[str, Any]) -> RunConfig:
        """Return a copy with `overrides` applied; string values are converted to the key's type.

        Raises:
            ConfigError: If a key is unknown or a value cannot be converted.
        """
        unknown = sorted(set(overrides) - set(self.keys()))
        if unknown:
            raise ConfigError(f"Unknown configuration key(s): {', '.join(unknown)}.")
        hints = typing.get_type_hints(type(self))
        converted = {}
        for key, value in overrides.items():
            if isinstance(value, str):
                value = _convert(key, value, hints[key])
            converted[key] = value
        return replace(self, **converted)

    def trainer_config(self) -> TrainerConfig:
        trainer_keys = {f.name for f in fields(TrainerConfig)}
        values = {key: value for key, value in asdict(self).items() if key in trainer_keys}
        return TrainerConfig(**values)

    def balls_config(self, num_sequences: int) -> BallsConfig:
        return BallsConfig(
            num_balls=self.balls,
            resolution=self.res,
            sequence_length=self.length,
            num_sequences=num_sequences,
            ball_radius=self.ball_radius,
            speed_scale=self.speed_scale,
            seed=self.seed,
        )

    def model_spec(self, visible_dim: int) -> ModelSpec:
        return parse_spec_string(self.spec, visible_dim)

    def require(self, *names: str) -> None:
        """Raise ConfigError unless every named path setting is given."""
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            flags = ", ".join("--" + name.replace("_", "-") for name in missing)
            raise ConfigError(f"{self.command or 'This command'} needs {flags}.")


def _convert(key: str, raw: str, hint: Any) -> Any:
    optional = type(None) in typing.get_args(hint)
    if optional and raw.lower() in ("", "none"):
        return None
    base = next((arg for arg in typing.get_args(hint) if arg is not type(None)), hint)
    try:
        if base is bool:
            return value_to_bool(raw)
        if base is Path:
            return Path(raw)
        return base(raw)
    except (TypeError, ValueError) as error:
        raise ConfigError(f"Invalid value {raw!r} for {key}.") from error

"""
Line-oriented run configuration.

A run config is a list of ``section.key = value`` lines; ``#`` starts a
comment and blank lines are ignored. ``schema_version`` is mandatory,
every other key has a default, and unknown keys are rejected with their
line number. Values are normalised on parse so that parse, render and
parse again give the same document.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple, Union
import logging

from .activations import kind_from_name, parse_dictionary
from .base import ConfigError
from .expressivity.fitting import FitBudget
from .expressivity.sobolev import GridSpec
from .ffn import FFNConfig, FFNVariant, GateKind
from .optim import Schedule
from .train import AblationCell, TrainConfig
from .transformer import ModelConfig

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def _int(text: str) -> str:
    return str(int(text))


def _float(text: str) -> str:
    return repr(float(text))


def _bool(text: str) -> str:
    lowered = text.lower()
    if lowered in ("true", "yes", "1", "on"):
        return "true"
    if lowered in ("false", "no", "0", "off"):
        return "false"
    raise ValueError(f"expected a boolean, got '{text}'")


def _optional(parser: Callable[[str], str]) -> Callable[[str], str]:
    def parse(text: str) -> str:
        if text == "" or text.lower() in ("none", "auto"):
            return "auto"
        return parser(text)

    return parse


def _int_list(text: str) -> str:
    items = [item.strip() for item in text.split(",") if item.strip()]
    if not items:
        raise ValueError("expected a comma-separated list of integers")
    return ",".join(str(int(item)) for item in items)


def _choice(values: Iterable[str]) -> Callable[[str], str]:
    allowed = list(values)

    def parse(text: str) -> str:
        for value in allowed:
            if text.lower() == value.lower():
                return value
        raise ValueError(f"expected one of {', '.join(allowed)}, got '{text}'")

    return parse


def _activation(text: str) -> str:
    if text == "" or text.lower() in ("none", "auto"):
        return "auto"
    return kind_from_name(text).tag.value


def _text(text: str) -> str:
    return text


# (key, default, parser); the order is the render order
SCHEMA: List[Tuple[str, str, Callable[[str], str]]] = [
    ("schema_version", str(SCHEMA_VERSION), _int),
    ("run.name", "", _text),
    ("run.seed", "0", _int),
    ("run.jobs", "1", _int),
    ("model.d_model", "64", _int),
    ("model.n_head", "4", _int),
    ("model.n_layer", "2", _int),
    ("model.vocab_size", "256", _int),
    ("model.seq_len", "64", _int),
    ("model.tie_embeddings", "true", _bool),
    ("model.rope_base", "10000.0", _float),
    ("model.norm_eps", "1e-06", _float),
    ("model.init_std", "0.02", _float),
    ("ffn.variant", FFNVariant.BASELINE_II.value, _choice(v.value for v in FFNVariant)),
    ("ffn.gate", GateKind.SIGMOID.value, _choice(g.value for g in GateKind)),
    ("ffn.dictionary", "auto", _optional(_text)),
    ("ffn.hidden", "auto", _optional(_int)),
    ("ffn.baseline_activation", "auto", _activation),
    ("ffn.gate_bias", "false", _bool),
    ("ffn.init_std", "0.02", _float),
    ("train.max_lr", "0.003", _float),
    ("train.schedule", Schedule.COS.value, _choice(s.value for s in Schedule)),
    ("train.warmup_steps", "50", _int),
    ("train.total_steps", "500", _int),
    ("train.batch_size", "16", _int),
    ("train.beta1", "0.9", _float),
    ("train.beta2", "0.95", _float),
    ("train.weight_decay", "0.1", _float),
    ("train.clip_norm", "1.0", _optional(_float)),
    ("train.eps", "1e-08", _float),
    ("train.seeds", "0", _int_list),
    ("train.corpus_path", "data/corpus.txt", _text),
    ("train.eval_interval", "auto", _optional(_int)),
    ("train.eval_batches", "4", _int),
    ("train.holdout_fraction", "0.05", _float),
    ("grid.points_per_axis", "401", _int),
    ("grid.half_width", "1.0", _float),
    ("grid.kink_exclusion_factor", "1.5", _float),
    ("fit.restarts", "8", _int),
    ("fit.steps", "5000", _int),
    ("fit.lr", "0.01", _float),
    ("fit.grad_weight", "0.5", _float),
    ("fit.points_1d", "201", _int),
    ("fit.points_2d", "41", _int),
    ("fit.param_bound", "20.0", _float),
    ("fit.polish", "true", _bool),
    ("fit.polish_evals", "200", _int),
    ("bench.steps", "10", _int),
    ("bench.warmup", "2", _int),
    ("bench.batch_size", "4", _int),
    ("output.dir", "runs", _text),
]

_PARSERS = {key: parser for key, _, parser in SCHEMA}
_DEFAULTS = {key: parser(default) for key, default, parser in SCHEMA}


def _split_line(raw: str, number: int) -> Optional[Tuple[str, str]]:
    line = raw.split("#", 1)[0].strip()
    if not line:
        return None
    key, sep, value = line.partition("=")
    if not sep:
        raise ConfigError(f"expected 'key = value', got '{line}'", line=number)
    return key.strip(), value.strip()


def _normalise(key: str, value: str, line: Optional[int] = None) -> str:
    parser = _PARSERS.get(key)
    if parser is None:
        raise ConfigError(f"unknown key '{key}'", key=key, line=line)
    try:
        return parser(value)
    except (ValueError, ConfigError) as e:
        raise ConfigError(f"bad value '{value}': {e}", key=key, line=line) from e


@dataclass
class RunConfig:
    """Every setting of a run, stored as normalised strings keyed by dotted name."""

    values: Dict[str, str] = field(default_factory=lambda: dict(_DEFAULTS))

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        """
        Parse a config document.

        Raises:
            ConfigError: Malformed line, unknown key, bad value, duplicate key
                or missing schema_version (carries key and line)
        """
        values = dict(_DEFAULTS)
        seen: Dict[str, int] = {}
        for number, raw in enumerate(text.splitlines(), start=1):
            parsed = _split_line(raw, number)
            if parsed is None:
                continue
            key, value = parsed
            if key in seen:
                raise ConfigError(f"duplicate key (first set on line {seen[key]})", key=key, line=number)
            values[key] = _normalise(key, value, number)
            seen[key] = number
        if "schema_version" not in seen:
            raise ConfigError("schema_version is mandatory", key="schema_version")
        if values["schema_version"] != str(SCHEMA_VERSION):
            raise ConfigError(
                f"unsupported schema_version {values['schema_version']}",
                key="schema_version",
                line=seen["schema_version"],
            )
        return cls(values)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file '{path}' does not exist", key="config")
        return cls.parse(path.read_text())

    def render(self) -> str:
        return "".join(f"{key} = {self.values[key]}\n" for key, _, _ in SCHEMA)

    def apply_overrides(self, overrides: Iterable[str]) -> "RunConfig":
        """Return a copy with ``key=value`` overrides applied in order."""
        values = dict(self.values)
        for item in overrides:
            key, sep, value = item.partition("=")
            if not sep:
                raise ConfigError(f"override '{item}' must look like key=value", key=item)
            values[key.strip()] = _normalise(key.strip(), value.strip())
        return RunConfig(values)

    def get(self, key: str) -> str:
        return self.values[key]

    def _int(self, key: str) -> int:
        return int(self.values[key])

    def _float(self, key: str) -> float:
        return float(self.values[key])

    def _bool(self, key: str) -> bool:
        return self.values[key] == "true"

    def _auto(self, key: str, cast: Callable[[str], object]) -> Optional[object]:
        value = self.values[key]
        return None if value == "auto" else cast(value)

    @property
    def seed(self) -> int:
        return self._int("run.seed")

    @property
    def jobs(self) -> int:
        return self._int("run.jobs")

    @property
    def name(self) -> str:
        return self.values["run.name"]

    @property
    def output_dir(self) -> str:
        return self.values["output.dir"]

    def to_ffn_config(self) -> FFNConfig:
        variant = FFNVariant(self.values["ffn.variant"])
        code = self.values["ffn.dictionary"]
        activation = self.values["ffn.baseline_activation"]
        try:
            return FFNConfig(
                d_model=self._int("model.d_model"),
                variant=variant,
                dictionary=None if code == "auto" else parse_dictionary(code, variant.flavor),
                gate=GateKind(self.values["ffn.gate"]),
                hidden=self._auto("ffn.hidden", int),
                seed=self.seed,
                gate_bias=self._bool("ffn.gate_bias"),
                baseline_activation=None if activation == "auto" else kind_from_name(activation),
                init_std=self._float("ffn.init_std"),
            )
        except ConfigError as e:
            raise _qualified(e, "ffn", default="ffn.dictionary") from e

    def to_model_config(self) -> ModelConfig:
        return ModelConfig(
            d_model=self._int("model.d_model"),
            n_head=self._int("model.n_head"),
            n_layer=self._int("model.n_layer"),
            vocab_size=self._int("model.vocab_size"),
            seq_len=self._int("model.seq_len"),
            ffn=self.to_ffn_config(),
            tie_embeddings=self._bool("model.tie_embeddings"),
            rope_base=self._float("model.rope_base"),
            norm_eps=self._float("model.norm_eps"),
            init_std=self._float("model.init_std"),
        )

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            max_lr=self._float("train.max_lr"),
            schedule=Schedule(self.values["train.schedule"]),
            warmup_steps=self._int("train.warmup_steps"),
            total_steps=self._int("train.total_steps"),
            batch_size=self._int("train.batch_size"),
            beta1=self._float("train.beta1"),
            beta2=self._float("train.beta2"),
            weight_decay=self._float("train.weight_decay"),
            clip_norm=self._auto("train.clip_norm", float),
            eps=self._float("train.eps"),
            seeds=[int(s) for s in self.values["train.seeds"].split(",")],
            corpus_path=self.values["train.corpus_path"],
            eval_interval=self._auto("train.eval_interval", int),
            eval_batches=self._int("train.eval_batches"),
            holdout_fraction=self._float("train.holdout_fraction"),
        )

    def to_grid_spec(self) -> GridSpec:
        return GridSpec(
            half_width=self._float("grid.half_width"),
            points_per_axis=self._int("grid.points_per_axis"),
            kink_exclusion_factor=self._float("grid.kink_exclusion_factor"),
        )

    def to_fit_budget(self) -> FitBudget:
        return FitBudget(
            restarts=self._int("fit.restarts"),
            steps=self._int("fit.steps"),
            lr=self._float("fit.lr"),
            grad_weight=self._float("fit.grad_weight"),
            points_1d=self._int("fit.points_1d"),
            points_2d=self._int("fit.points_2d"),
            param_bound=self._float("fit.param_bound"),
            polish=self._bool("fit.polish"),
            polish_evals=self._int("fit.polish_evals"),
            seed=self.seed,
        )


def _qualified(error: ConfigError, section: str, default: Optional[str] = None) -> ConfigError:
    """Same error with its key prefixed by the config section it came from."""
    key = error.key
    if key is None:
        key = default
    elif "." not in key:
        key = f"{section}.{key}"
    return ConfigError(error.detail, key=key, line=error.line)


def build_model_config(config: RunConfig) -> ModelConfig:
    """:meth:`RunConfig.to_model_config` with section-qualified error keys."""
    try:
        return config.to_model_config()
    except ConfigError as e:
        raise _qualified(e, "model") from e


def build_train_config(config: RunConfig) -> TrainConfig:
    try:
        return config.to_train_config()
    except ConfigError as e:
        raise _qualified(e, "train") from e


@dataclass
class AblationGrid:
    """Cells of an ablation plus the reference cell and optional lr sweep."""

    cells: List[AblationCell]
    baseline: str
    lr_grid: List[float] = field(default_factory=list)


def _cell_fields(name: str, spec: str, number: int) -> AblationCell:
    fields: Dict[str, str] = {}
    for token in spec.split():
        key, sep, value = token.partition("=")
        if not sep:
            raise ConfigError(f"cell field '{token}' must look like key=value", key=f"cell.{name}", line=number)
        fields[key] = value
    allowed = {"variant", "gate", "dictionary", "max_lr", "baseline_activation", "hidden"}
    unknown = sorted(set(fields) - allowed)
    if unknown:
        raise ConfigError(f"unknown cell field(s) {unknown}", key=f"cell.{name}", line=number)
    if "variant" not in fields:
        raise ConfigError("cell needs a variant", key=f"cell.{name}", line=number)
    try:
        return AblationCell(
            name=name,
            variant=_choice(v.value for v in FFNVariant)(fields["variant"]),
            gate=_choice(g.value for g in GateKind)(fields.get("gate", GateKind.SIGMOID.value)),
            dictionary=fields.get("dictionary", ""),
            max_lr=float(fields.get("max_lr", "3e-3")),
            baseline_activation=fields.get("baseline_activation"),
            hidden=int(fields["hidden"]) if "hidden" in fields else None,
        )
    except (ValueError, ConfigError) as e:
        raise ConfigError(f"bad cell: {e}", key=f"cell.{name}", line=number) from e


def parse_ablation_grid(text: str) -> AblationGrid:
    """
    Parse an ablation grid document::

        schema_version = 1
        baseline = swiglu
        lr_grid = 1e-3, 3e-3, 6e-3
        cell.swiglu = variant=BaselineII
        cell.bimoa = variant=BiMoA gate=Sigmoid dictionary=gsr2ltr

    Raises:
        ConfigError: Unknown key, malformed cell, duplicate cell or missing baseline
    """
    cells: List[AblationCell] = []
    baseline: Optional[str] = None
    lr_grid: List[float] = []
    has_version = False
    for number, raw in enumerate(text.splitlines(), start=1):
        parsed = _split_line(raw, number)
        if parsed is None:
            continue
        key, value = parsed
        if key == "schema_version":
            if value != str(SCHEMA_VERSION):
                raise ConfigError(f"unsupported schema_version {value}", key=key, line=number)
            has_version = True
        elif key == "baseline":
            baseline = value
        elif key == "lr_grid":
            try:
                lr_grid = [float(item) for item in value.split(",") if item.strip()]
            except ValueError as e:
                raise ConfigError(f"bad lr_grid: {e}", key=key, line=number) from e
        elif key.startswith("cell."):
            name = key[len("cell."):]
            if any(cell.name == name for cell in cells):
                raise ConfigError("duplicate cell", key=key, line=number)
            cells.append(_cell_fields(name, value, number))
        else:
            raise ConfigError(f"unknown key '{key}'", key=key, line=number)
    if not has_version:
        raise ConfigError("schema_version is mandatory", key="schema_version")
    if not cells:
        raise ConfigError("ablation grid has no cells", key="cell")
    if baseline is None or not any(cell.name == baseline for cell in cells):
        raise ConfigError(f"baseline '{baseline}' names no cell", key="baseline")
    return AblationGrid(cells, baseline, lr_grid)


def load_ablation_grid(path: Union[str, Path]) -> AblationGrid:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"grid file '{path}' does not exist", key="grid")
    return parse_ablation_grid(path.read_text())

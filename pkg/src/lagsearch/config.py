"""Flat ``key = value`` run configuration with per-domain presets.

Precedence, lowest to highest: built-in defaults, the preset named by
``preset``, the ``--config`` file, then command-line flags. Keys use
dashes (``k-s``, ``band-radius``); ``none`` clears an optional value.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from typing import Any, Optional

from .contrastive import LossConfig, TrainConfig
from .dtw import COST_KINDS, DtwConfig
from .encoder import DEFAULT_BLOCKS, EncoderArch
from .errors import InvalidInputError, ParseError
from .experiments import SYNTH_BLOCKS
from .forecaster import METHODS, ForecastModelSpec
from .series import MISSING_POLICIES, SplitSpec, WindowSpec
from .ssdtw import ShiftSet

PRESETS: dict[str, dict[str, Any]] = {
    "weather": {"shifts": (1, 3, 5, 10), "input_len": 49, "encoder_blocks": DEFAULT_BLOCKS},
    "stock": {"shifts": (5, 10, 20, 30), "input_len": 49, "encoder_blocks": DEFAULT_BLOCKS},
    "realestate": {"shifts": (1, 2, 3), "input_len": 9, "encoder_blocks": DEFAULT_BLOCKS},
    "synthetic": {"shifts": (1, 3, 5, 10), "input_len": 49, "encoder_blocks": SYNTH_BLOCKS},
}
PRESET_KEYS = ("shifts", "input_len", "encoder_blocks")


# -- value codecs -------------------------------------------------------------

def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.replace(" ", "").split(",") if p)


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.replace(" ", "").split(",") if p)


def _words(text: str) -> tuple[str, ...]:
    return tuple(p for p in text.replace(" ", "").split(",") if p)


def _blocks(text: str) -> tuple[tuple[int, int, int], ...]:
    out = []
    for part in _words(text):
        nums = tuple(int(x) for x in part.split(":"))
        if len(nums) != 3:
            raise ValueError(f"block {part!r} is not channels:kernel:pool")
        out.append(nums)
    return tuple(out)


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ",".join(":".join(str(x) for x in b) for b in value)
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _opt(parse):
    def inner(text: str):
        return None if text.strip().lower() in ("none", "") else parse(text)
    return inner


def _key(name: str) -> str:
    return "lambda" if name == "lam" else name.replace("_", "-")


def _opt_field(default, parse, help_text, choices=None):
    return field(default=default, metadata={"parse": parse, "help": help_text, "choices": choices})


@dataclass
class RunConfig:
    preset: str = _opt_field("synthetic", str, "domain preset", tuple(PRESETS))
    output_dir: str = _opt_field(".", str, "directory for outputs without an explicit path")
    workers: Optional[int] = _opt_field(None, _opt(int), "worker threads (default: cores)")
    seeds: tuple[int, ...] = _opt_field((0,), _ints, "comma-separated seeds")
    # ingestion
    missing: str = _opt_field("drop-series", str, "missing-value policy", MISSING_POLICIES)
    target_feature: str = _opt_field("value", str, "value column feeding the pipeline")
    allow_ragged: bool = _opt_field(False, _bool, "accept unequal series lengths")
    # synthetic family
    n_series: int = _opt_field(100, int, "synthetic series count")
    length: int = _opt_field(120, int, "synthetic series length")
    lag: int = _opt_field(5, int, "planted lag")
    noise_sigma: float = _opt_field(0.1, float, "planted noise level")
    n_correlated: int = _opt_field(3, int, "companions per planted target")
    n_targets: Optional[int] = _opt_field(None, _opt(int), "planted targets (default N/(2(c+1)))")
    # distances
    shifts: Optional[tuple[int, ...]] = _opt_field(None, _opt(_ints), "shift set (default: preset)")
    include_zero: bool = _opt_field(False, _bool, "add the unshifted term to the shift set")
    align_target_head: bool = _opt_field(False, _bool, "trim the target head by each shift too")
    metric: str = _opt_field("ssdtw", str, "exact distance", ("ssdtw", "dtw"))
    normalize: bool = _opt_field(True, _bool, "z-score each series before distances")
    local_cost: str = _opt_field("squared_diff", str, "DTW local cost", tuple(COST_KINDS))
    band_radius: Optional[int] = _opt_field(None, _opt(int), "Sakoe-Chiba radius")
    normalize_by_path: bool = _opt_field(False, _bool, "divide DTW by path length")
    selection_len: Optional[int] = _opt_field(None, _opt(int), "leading steps used for selection")
    # retrieval and contrastive training
    k_s: int = _opt_field(3, int, "auxiliary series per target")
    k_e: int = _opt_field(5, int, "positives per anchor")
    n_neg: Optional[int] = _opt_field(None, _opt(int), "negatives per anchor (default k-e)")
    lam: float = _opt_field(0.2, float, "InfoNCE temperature")
    encoder_input_len: Optional[int] = _opt_field(None, _opt(int), "encoder window (default: series length)")
    encoder_blocks: Optional[tuple] = _opt_field(None, _opt(_blocks), "conv blocks as ch:kernel:pool,...")
    embedding_dim: int = _opt_field(128, int, "embedding width")
    learning_rate: float = _opt_field(1e-3, float, "optimizer step size")
    max_epochs: int = _opt_field(50, int, "training epoch cap")
    batch_size: int = _opt_field(32, int, "mini-batch size")
    patience: int = _opt_field(5, int, "early-stopping patience")
    optimizer: str = _opt_field("adam", str, "optimizer", ("adam", "sgd"))
    val_fraction: float = _opt_field(0.2, float, "anchors held out for encoder validation")
    # forecasting
    input_len: Optional[int] = _opt_field(None, _opt(int), "forecast lookback (default: preset)")
    horizon: int = _opt_field(1, int, "steps ahead")
    stride: int = _opt_field(1, int, "window stride")
    split: tuple[float, ...] = _opt_field((0.6, 0.2, 0.2), _floats, "train,val,test ratios")
    model: str = _opt_field("ridge", str, "forecaster", ("ridge", "mlp"))
    alpha: float = _opt_field(1.0, float, "ridge penalty")
    hidden: int = _opt_field(64, int, "MLP hidden width")
    methods: tuple[str, ...] = _opt_field(METHODS, _words, "selection methods to compare")
    shift_aux_by_argmin: bool = _opt_field(False, _bool, "lag aux windows by their best shift")

    def __post_init__(self):
        self.validate()

    # -- resolution --------------------------------------------------------

    def validate(self) -> None:
        for f in fields(self):
            choices = f.metadata.get("choices")
            if choices and getattr(self, f.name) not in choices:
                raise InvalidInputError(f"{_key(f.name)} must be one of {', '.join(choices)}")
        for m in self.methods:
            if m not in METHODS:
                raise InvalidInputError(f"unknown method {m!r}")
        if self.workers is not None and self.workers < 1:
            raise InvalidInputError("workers must be positive")
        if not self.seeds:
            raise InvalidInputError("seeds is empty")
        if self.k_s < 0:
            raise InvalidInputError("k-s must be non-negative")
        if not 0 < self.val_fraction < 1:
            raise InvalidInputError("val-fraction must be in (0, 1)")

    def resolved(self, key: str):
        value = getattr(self, key)
        return PRESETS[self.preset][key] if value is None and key in PRESET_KEYS else value

    def effective(self) -> "RunConfig":
        """A copy with preset-derived values written out explicitly."""
        return dataclasses.replace(self, **{k: self.resolved(k) for k in PRESET_KEYS})

    @property
    def n_workers(self) -> int:
        return self.workers or os.cpu_count() or 1

    def shift_set(self) -> ShiftSet:
        return ShiftSet(self.resolved("shifts"), self.include_zero)

    def dtw_config(self) -> DtwConfig:
        return DtwConfig(self.local_cost, self.band_radius, self.normalize_by_path)

    def window(self) -> WindowSpec:
        return WindowSpec(self.resolved("input_len"), self.horizon, self.stride)

    def split_spec(self, seed: int) -> SplitSpec:
        if len(self.split) != 3:
            raise InvalidInputError("split needs three ratios")
        return SplitSpec(tuple(self.split), seed)

    def loss_config(self) -> LossConfig:
        return LossConfig(self.lam, self.k_e)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(self.learning_rate, self.max_epochs, self.batch_size,
                           self.patience, seed, self.optimizer)

    def encoder_arch(self, series_len: int) -> EncoderArch:
        return EncoderArch(self.encoder_input_len or series_len,
                           tuple(self.resolved("encoder_blocks")), self.embedding_dim)

    def model_spec(self) -> ForecastModelSpec:
        return ForecastModelSpec(self.model, self.alpha, self.hidden, self.learning_rate,
                                 self.max_epochs, self.batch_size, self.patience)

    # -- text form ---------------------------------------------------------

    def dump(self) -> str:
        eff = self.effective()
        lines = ["# lagsearch run configuration"]
        for f in fields(eff):
            lines.append(f"{_key(f.name)} = {_fmt(getattr(eff, f.name))}")
        return "\n".join(lines) + "\n"


FIELDS = {_key(f.name): f for f in fields(RunConfig)}


def parse_value(key: str, text: str):
    f = FIELDS.get(key)
    if f is None:
        raise InvalidInputError(f"unknown config key {key!r}")
    try:
        return f.metadata["parse"](text)
    except ValueError as exc:
        raise InvalidInputError(f"bad value for {key}: {exc}") from None


def parse_text(text: str) -> dict[str, Any]:
    """``{field_name: value}`` for every assignment in a config file."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError("expected key = value", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        try:
            out[FIELDS[key].name if key in FIELDS else key] = parse_value(key, value)
        except InvalidInputError as exc:
            raise ParseError(str(exc), lineno) from None
    return out


def load_config(path=None, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """Build a RunConfig from an optional file plus flag overrides."""
    values: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                values.update(parse_text(fh.read()))
        except OSError as exc:
            raise InvalidInputError(f"cannot read config {path}: {exc.strerror}") from None
    values.update(overrides or {})
    return RunConfig(**values)

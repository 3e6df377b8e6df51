"""Scenario configuration: dataclasses, file parsing and validation.

Config files are flat ``section.key = value`` text; unknown keys are
rejected outright so a typo cannot silently fall back to a default.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .analysis import DEFAULT_CUTOFFS_HZ, RandlesParams
from .electrical import InterconnectResistances
from .modulation import WaveformSpec

METHODS = ("proposed", "reference", "proposed-sensorless")
DEMAND_MODES = ("equal-share", "soc-proportional")


class ConfigError(ValueError):
    """Invalid configuration file or parameter set."""


@dataclass
class ControlConfig:
    # slow trim loop: the optimizer meets the demand through state
    # sequences, so little controller bandwidth is needed, and a slow
    # integrator keeps the idle reassignment churn (and with it the raw
    # current RMS) down
    kp: float = 0.0
    ki: float = 0.5  # 1/s, sensored integral gain
    ki_sensorless: float = 10.0  # 1/s
    feedback_delay_s: float = 0.0
    toggle_limit: int = 2
    demand_mode: str = "equal-share"
    demand_beta: float = 2.0
    windup_limit: float | None = None  # None: 2x rated module current
    lut_update: bool = False
    lut_update_threshold_v: float = 0.05


@dataclass
class BatteryConfig:
    capacity_ah: float = 6.2
    r_b_ohm: float = 1.5e-3
    ocv_min_v: float = 20.0
    ocv_max_v: float = 25.2
    initial_soc: float = 0.5
    initial_socs: tuple[float, ...] | None = None
    soc_jitter: float = 0.0  # std of seeded additive jitter
    r_jitter: float = 0.0  # std of seeded relative jitter on r_b


@dataclass
class ReferenceConfig:
    update_period_s: float = 0.1


@dataclass
class ScenarioConfig:
    n_modules: int = 5
    method: str = "proposed"
    duration_s: float = 2.0
    seed: int = 0
    waveform: WaveformSpec = field(default_factory=WaveformSpec)
    control: ControlConfig = field(default_factory=ControlConfig)
    reference: ReferenceConfig = field(default_factory=ReferenceConfig)
    battery: BatteryConfig = field(default_factory=BatteryConfig)
    interconnect: InterconnectResistances = field(
        default_factory=InterconnectResistances
    )
    cutoffs_hz: tuple[float, ...] = DEFAULT_CUTOFFS_HZ
    target_module: int | None = None  # 1-based; None means the last module
    randles: RandlesParams = field(default_factory=RandlesParams)

    # -- derived -----------------------------------------------------------

    @property
    def dt(self) -> float:
        return 1.0 / self.waveform.f_rate

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration_s * self.waveform.f_rate))

    @property
    def target_index(self) -> int:
        """0-based index of the comparison target module."""
        return (self.target_module or self.n_modules) - 1

    def initial_soc_vector(self) -> np.ndarray:
        socs = (
            np.asarray(self.battery.initial_socs, dtype=float)
            if self.battery.initial_socs is not None
            else np.full(self.n_modules, self.battery.initial_soc)
        )
        if self.battery.soc_jitter > 0.0:
            rng = np.random.default_rng(self.seed)
            socs = socs + rng.normal(0.0, self.battery.soc_jitter, self.n_modules)
        return np.clip(socs, 0.0, 1.0)

    def module_resistances(self) -> np.ndarray:
        r = np.full(self.n_modules, self.battery.r_b_ohm)
        if self.battery.r_jitter > 0.0:
            rng = np.random.default_rng(self.seed + 1)
            r = r * np.clip(
                1.0 + rng.normal(0.0, self.battery.r_jitter, self.n_modules),
                0.05,
                None,
            )
        return r

    def windup_limit(self) -> float:
        if self.control.windup_limit is not None:
            return self.control.windup_limit
        if self.method == "proposed-sensorless":
            return 2.0
        return 2.0 * max(self.waveform.i_pk, 1.0)

    # -- validation ---------------------------------------------------------

    def validate(self) -> "ScenarioConfig":
        wf = self.waveform
        if not 2 <= self.n_modules <= 8:
            raise ConfigError(f"n_modules must be in 2..8, got {self.n_modules}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.duration_s <= 0:
            raise ConfigError("duration must be positive")
        periods = self.duration_s * wf.f_out
        if abs(periods - round(periods)) > 1e-9 * max(1.0, periods):
            raise ConfigError(
                f"duration {self.duration_s} s is not a whole number of "
                f"fundamental periods at {wf.f_out} Hz"
            )
        ticks = self.duration_s * wf.f_rate
        if abs(ticks - round(ticks)) > 1e-6:
            raise ConfigError("duration is not a whole number of ticks")
        bat = self.battery
        if bat.capacity_ah <= 0 or bat.r_b_ohm <= 0:
            raise ConfigError("battery capacity and resistance must be positive")
        if bat.ocv_max_v <= bat.ocv_min_v:
            raise ConfigError("ocv_max_v must exceed ocv_min_v")
        if not 0.0 <= bat.initial_soc <= 1.0:
            raise ConfigError("initial_soc outside [0, 1]")
        if bat.initial_socs is not None:
            if len(bat.initial_socs) != self.n_modules:
                raise ConfigError(
                    f"initial_socs has {len(bat.initial_socs)} entries for "
                    f"{self.n_modules} modules"
                )
            if any(not 0.0 <= s <= 1.0 for s in bat.initial_socs):
                raise ConfigError("initial_socs outside [0, 1]")
        if bat.soc_jitter < 0 or bat.r_jitter < 0:
            raise ConfigError("jitter magnitudes must be nonnegative")
        ctl = self.control
        if ctl.kp < 0 or ctl.ki < 0 or ctl.ki_sensorless < 0:
            raise ConfigError("controller gains must be nonnegative")
        if ctl.feedback_delay_s < 0:
            raise ConfigError("feedback delay must be nonnegative")
        if ctl.toggle_limit < 1:
            raise ConfigError("toggle_limit must be >= 1")
        if ctl.demand_mode not in DEMAND_MODES:
            raise ConfigError(f"unknown demand mode {ctl.demand_mode!r}")
        if ctl.windup_limit is not None and ctl.windup_limit <= 0:
            raise ConfigError("windup limit must be positive")
        if ctl.lut_update_threshold_v <= 0:
            raise ConfigError("LUT update threshold must be positive")
        if self.reference.update_period_s <= 0:
            raise ConfigError("update period must be positive")
        if not self.cutoffs_hz:
            raise ConfigError("need at least one cut-off frequency")
        if any(not 0.0 < fc < wf.f_rate / 2.0 for fc in self.cutoffs_hz):
            raise ConfigError("cut-offs must lie in (0, f_rate/2)")
        if self.target_module is not None and not (
            1 <= self.target_module <= self.n_modules
        ):
            raise ConfigError("target_module out of range")
        return self


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _set(section: str, name: str, cast: Callable):
    def setter(cfg: ScenarioConfig, raw: str) -> None:
        value = cast(raw)
        if section:
            sub = getattr(cfg, section)
            setattr(cfg, section, replace(sub, **{name: value})
                    if _is_frozen(sub) else _mutate(sub, name, value))
        else:
            setattr(cfg, name, value)

    return setter


def _is_frozen(obj) -> bool:
    return getattr(obj, "__dataclass_params__").frozen


def _mutate(obj, name, value):
    setattr(obj, name, value)
    return obj


_KEYS: dict[str, Callable[[ScenarioConfig, str], None]] = {
    "run.n_modules": _set("", "n_modules", int),
    "run.method": _set("", "method", str.strip),
    "run.duration_s": _set("", "duration_s", float),
    "run.seed": _set("", "seed", int),
    "waveform.f_out_hz": _set("waveform", "f_out", float),
    "waveform.f_rate_hz": _set("waveform", "f_rate", float),
    "waveform.modulation_index": _set("waveform", "m", float),
    "waveform.i_pk_a": _set("waveform", "i_pk", float),
    "waveform.phi_rad": _set("waveform", "phi", float),
    "control.kp": _set("control", "kp", float),
    "control.ki_per_s": _set("control", "ki", float),
    "control.ki_sensorless_per_s": _set("control", "ki_sensorless", float),
    "control.feedback_delay_s": _set("control", "feedback_delay_s", float),
    "control.toggle_limit": _set("control", "toggle_limit", int),
    "control.demand_mode": _set("control", "demand_mode", str.strip),
    "control.demand_beta": _set("control", "demand_beta", float),
    "control.windup_limit": _set("control", "windup_limit", float),
    "control.lut_update": _set("control", "lut_update", _parse_bool),
    "control.lut_update_threshold_v": _set("control", "lut_update_threshold_v", float),
    "reference.update_period_s": _set("reference", "update_period_s", float),
    "battery.capacity_ah": _set("battery", "capacity_ah", float),
    "battery.r_b_ohm": _set("battery", "r_b_ohm", float),
    "battery.ocv_min_v": _set("battery", "ocv_min_v", float),
    "battery.ocv_max_v": _set("battery", "ocv_max_v", float),
    "battery.initial_soc": _set("battery", "initial_soc", float),
    "battery.initial_socs": _set("battery", "initial_socs", _parse_float_list),
    "battery.soc_jitter": _set("battery", "soc_jitter", float),
    "battery.r_jitter": _set("battery", "r_jitter", float),
    "interconnect.r_sh_ohm": _set("interconnect", "r_sh", float),
    "interconnect.r_sl_ohm": _set("interconnect", "r_sl", float),
    "analysis.cutoffs_hz": _set("", "cutoffs_hz", _parse_float_list),
    "analysis.target_module": _set("", "target_module", int),
    "randles.r0_ohm": _set("randles", "r0", float),
    "randles.rct_ohm": _set("randles", "rct", float),
    "randles.cdl_f": _set("randles", "cdl", float),
    "randles.sigma_w": _set("randles", "sigma_w", float),
}


def parse_config_text(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Apply ``key = value`` lines to a (default) config. Fails fast on
    unknown keys, bad values and post-hoc validation."""
    cfg = base if base is not None else ScenarioConfig()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        setter = _KEYS.get(key)
        if setter is None:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            setter(cfg, value.strip())
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from exc
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text).validate()


def apply_overrides(
    cfg: ScenarioConfig,
    method: str | None = None,
    delay_ms: float | None = None,
    duration_s: float | None = None,
) -> ScenarioConfig:
    """Apply the common command-line overrides in place."""
    if method is not None:
        cfg.method = method
    if delay_ms is not None:
        if delay_ms < 0:
            raise ConfigError("delay must be nonnegative")
        cfg.control = replace(cfg.control, feedback_delay_s=delay_ms / 1000.0)
    if duration_s is not None:
        cfg.duration_s = duration_s
    return cfg

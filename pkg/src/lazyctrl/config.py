"""Simulation configuration and its INI-style file format.

Example file::

    [lazyctrl]
    mode = dynamic
    group_size_limit = 10
    target_fpr = 0.001
    regroup_min_interval_s = 120
    keepalive_period_s = 1
    sync_period_s = 1
    seed = 7

    [thresholds]
    high_factor = 1.3
    low_factor = 1.0

    [latency]
    edge_to_controller_us = 1000
    edge_to_edge_us = 100
    local_us = 10
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any

from .controller import ControllerConfig
from .switch import Timing

MODES = ("baseline", "static", "dynamic")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LatencyModel:
    edge_to_controller_us: int = 1000
    edge_to_edge_us: int = 100
    local_us: int = 10

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            if getattr(self, f.name) <= 0:
                raise ConfigError(f"{f.name} must be positive")


@dataclass(frozen=True)
class SimConfig:
    trace_path: str | None = None
    mode: str = "dynamic"
    # None: ceil(n_switches / 5), i.e. five groups
    size_limit: int | None = None
    n_groups: int | None = None
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    latency: LatencyModel = field(default_factory=LatencyModel)
    timing: Timing = field(default_factory=Timing)
    target_fpr: float = 0.001
    initial_window_s: float = 3600.0
    intensity_window_s: float = 3600.0
    regroup_check_s: float = 10.0
    duration_s: float | None = None
    fault_script: str | None = None
    reboot_s: float = 30.0
    misforward_to_controller: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.size_limit is not None and self.size_limit < 1:
            raise ConfigError("size_limit must be >= 1")
        if not 0 < self.target_fpr < 1:
            raise ConfigError("target_fpr must lie in (0, 1)")
        for name in ("initial_window_s", "intensity_window_s", "regroup_check_s", "reboot_s"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes: Any) -> SimConfig:
        return dataclasses.replace(self, **changes)


# file key -> (section, SimConfig field or "controller.x" / "latency.x" / "timing.x", type)
_KEYS: dict[tuple[str, str], tuple[str, type]] = {
    ("lazyctrl", "trace"): ("trace_path", str),
    ("lazyctrl", "mode"): ("mode", str),
    ("lazyctrl", "group_size_limit"): ("size_limit", int),
    ("lazyctrl", "n_groups"): ("n_groups", int),
    ("lazyctrl", "target_fpr"): ("target_fpr", float),
    ("lazyctrl", "initial_window_s"): ("initial_window_s", float),
    ("lazyctrl", "intensity_window_s"): ("intensity_window_s", float),
    ("lazyctrl", "regroup_check_s"): ("regroup_check_s", float),
    ("lazyctrl", "duration_s"): ("duration_s", float),
    ("lazyctrl", "fault_script"): ("fault_script", str),
    ("lazyctrl", "reboot_s"): ("reboot_s", float),
    ("lazyctrl", "misforward_to_controller"): ("misforward_to_controller", bool),
    ("lazyctrl", "seed"): ("seed", int),
    ("lazyctrl", "keepalive_period_s"): ("timing.keepalive_period_s", float),
    ("lazyctrl", "sync_period_s"): ("timing.sync_period_s", float),
    ("lazyctrl", "regroup_min_interval_s"): ("controller.regroup_min_interval_s", float),
    ("lazyctrl", "rule_idle_timeout_s"): ("controller.rule_idle_timeout_s", float),
    ("lazyctrl", "n_backups"): ("controller.n_backups", int),
    ("lazyctrl", "arp_blocking"): ("controller.arp_blocking", bool),
    ("thresholds", "high_factor"): ("controller.high_factor", float),
    ("thresholds", "low_factor"): ("controller.low_factor", float),
    ("latency", "edge_to_controller_us"): ("latency.edge_to_controller_us", int),
    ("latency", "edge_to_edge_us"): ("latency.edge_to_edge_us", int),
    ("latency", "local_us"): ("latency.local_us", int),
}


def _convert(parser: configparser.ConfigParser, section: str, key: str, typ: type) -> Any:
    try:
        if typ is bool:
            return parser.getboolean(section, key)
        if typ is int:
            return parser.getint(section, key)
        if typ is float:
            return parser.getfloat(section, key)
        return parser.get(section, key)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def parse_config(text: str, base: SimConfig | None = None) -> SimConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    base = base or SimConfig()
    top: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {"controller": {}, "latency": {}, "timing": {}}
    for section in parser.sections():
        for key in parser[section]:
            spec = _KEYS.get((section, key))
            if spec is None:
                raise ConfigError(f"unknown config key [{section}] {key}")
            target, typ = spec
            value = _convert(parser, section, key, typ)
            if "." in target:
                group, name = target.split(".")
                nested[group][name] = value
            else:
                top[target] = value
    try:
        return dataclasses.replace(
            base,
            controller=dataclasses.replace(base.controller, **nested["controller"]),
            latency=dataclasses.replace(base.latency, **nested["latency"]),
            timing=dataclasses.replace(base.timing, **nested["timing"]),
            **top,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | os.PathLike, base: SimConfig | None = None) -> SimConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)

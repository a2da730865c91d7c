"""Scenario configuration: dataclasses, defaults and the INI-style loader.

A scenario file is plain ``configparser`` text.  Every key is optional;
anything left out keeps the built-in default (the reference link of the
anti-jamming study plus the training hyperparameters).  Unknown sections
or keys are rejected so that typos never silently fall back to defaults.

Example::

    [uncertainty]
    epsilon_w = 20

    [jammers.2]
    kind = comb
    pos = 2, 1.5
    power_dbm = 45
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised for malformed or inconsistent scenario files."""


@dataclass(frozen=True)
class Geometry:
    tx_pos: tuple[float, float] = (0.0, 5.0)
    rx_pos: tuple[float, float] = (5.0, 5.0)
    d0_km: float = 1.0
    tau: float = 2.0

    def validate(self) -> None:
        if not self.d0_km > 0:
            raise ConfigError("geometry.d0_km must be > 0")
        if not self.tau >= 0:
            raise ConfigError("geometry.tau must be >= 0")
        if math.dist(self.tx_pos, self.rx_pos) <= 0:
            raise ConfigError("geometry.tx_pos and geometry.rx_pos coincide")


@dataclass(frozen=True)
class Modulation:
    name: str
    order: int

    @property
    def bits(self) -> float:
        return math.log2(self.order)


DEFAULT_MODULATIONS = (
    Modulation("BPSK", 2),
    Modulation("8PSK", 8),
    Modulation("16QAM", 16),
    Modulation("64QAM", 64),
)


@dataclass(frozen=True)
class RadioPlan:
    n_channels: int = 5
    bandwidth_hz: float = 1e7
    power_levels_dbm: tuple[float, ...] = (25.0, 30.0, 35.0, 40.0, 45.0, 50.0)
    modulations: tuple[Modulation, ...] = DEFAULT_MODULATIONS
    # thresholds for the highest, second highest, ... modulation order
    demod_thresholds_db: tuple[float, ...] = (15.0, 10.0, 5.0)
    # threshold of the lowest-order scheme (no published value)
    lowest_threshold_db: float = 0.0
    noise_dbm: float = -80.0
    throughput_threshold_bps: float = 1e6
    # shaped modulation reward buckets, highest first, and the fixed floor reward
    mod_reward_coeffs: tuple[float, ...] = (2000.0, 1000.0, 500.0)
    mod_reward_floor: float = 200.0
    suboptimal_penalty: float = 0.7

    def validate(self) -> None:
        if self.n_channels < 1:
            raise ConfigError("radio.n_channels must be >= 1")
        if not self.bandwidth_hz > 0:
            raise ConfigError("radio.bandwidth_hz must be > 0")
        p = self.power_levels_dbm
        if len(p) == 0 or any(b <= a for a, b in zip(p, p[1:])):
            raise ConfigError("radio.power_levels_dbm must be non-empty and strictly increasing")
        orders = sorted(m.order for m in self.modulations)
        if len(orders) < 1 or any(b <= a for a, b in zip(orders, orders[1:])) or orders[0] < 2:
            raise ConfigError("radio.modulations must have distinct orders >= 2")
        if len({m.name for m in self.modulations}) != len(self.modulations):
            raise ConfigError("radio.modulations has duplicate names")
        th = self.demod_thresholds_db
        if len(th) != len(self.modulations) - 1:
            raise ConfigError(
                "radio.demod_thresholds_db needs one entry per modulation except the lowest order"
            )
        full = list(th) + [self.lowest_threshold_db]
        if any(b >= a for a, b in zip(full, full[1:])):
            raise ConfigError("radio.demod_thresholds_db must be strictly decreasing (eta1 > eta2 > ...)")
        if len(self.mod_reward_coeffs) != len(th):
            raise ConfigError("radio.mod_reward_coeffs needs one entry per demod threshold")
        if not self.throughput_threshold_bps >= 0:
            raise ConfigError("radio.throughput_threshold_bps must be >= 0")

    @property
    def modulations_by_order(self) -> tuple[Modulation, ...]:
        """Modulations sorted from highest to lowest order."""
        return tuple(sorted(self.modulations, key=lambda m: -m.order))

    def threshold_db(self, mod: Modulation) -> float:
        ranked = self.modulations_by_order
        idx = ranked.index(mod)
        if idx < len(self.demod_thresholds_db):
            return self.demod_thresholds_db[idx]
        return self.lowest_threshold_db


@dataclass(frozen=True)
class JammerSpec:
    kind: str  # "cognitive" or "comb"
    pos: tuple[float, float]
    power_dbm: float
    detect_threshold_dbm: float = -55.0
    teeth: int = 2
    spacing: int = 2
    direction: str = "ascending"
    phase: int = 0
    period: int = 5

    def validate(self, n_channels: int, rx_pos, tx_pos) -> None:
        if self.kind not in ("cognitive", "comb"):
            raise ConfigError(f"jammer kind must be 'cognitive' or 'comb', got {self.kind!r}")
        if math.dist(self.pos, rx_pos) <= 0 or math.dist(self.pos, tx_pos) <= 0:
            raise ConfigError("jammer position coincides with a link node")
        if self.kind == "comb":
            if self.teeth < 1 or self.spacing < 1 or self.period < 1:
                raise ConfigError("comb jammer needs teeth, spacing, period >= 1")
            if self.direction not in ("ascending", "descending"):
                raise ConfigError("comb direction must be 'ascending' or 'descending'")

    def jammed_channels(self, slot: int, n_channels: int) -> frozenset[int]:
        """Channels a comb jammer occupies in the given short slot."""
        step = slot if self.direction == "ascending" else -slot
        base = (self.phase + step) % self.period
        return frozenset((base + j * self.spacing) % n_channels for j in range(self.teeth))


DEFAULT_JAMMERS = (
    JammerSpec("cognitive", (4.0, 10.0), 53.0, detect_threshold_dbm=-55.0),
    JammerSpec("comb", (2.0, 1.5), 45.0, teeth=2, spacing=2, direction="ascending", phase=0, period=5),
    JammerSpec("comb", (9.0, 8.0), 45.0, teeth=2, spacing=2, direction="descending", phase=1, period=5),
)


@dataclass(frozen=True)
class TimescalePlan:
    total_ms: int = 30
    long_ms: int = 3
    short_ms: int = 1

    def validate(self) -> None:
        if self.long_ms <= 0 or self.short_ms <= 0 or self.total_ms < 0:
            raise ConfigError("timescale durations must be positive")
        if self.total_ms % self.long_ms:
            raise ConfigError(
                f"timescale.long_ms={self.long_ms} does not divide timescale.total_ms={self.total_ms}"
            )
        if self.long_ms % self.short_ms:
            raise ConfigError(
                f"timescale.short_ms={self.short_ms} does not divide timescale.long_ms={self.long_ms}"
            )

    @property
    def k(self) -> int:
        return self.total_ms // self.long_ms

    @property
    def l(self) -> int:  # noqa: E743
        return self.long_ms // self.short_ms

    @property
    def short_s(self) -> float:
        return self.short_ms / 1000.0


@dataclass(frozen=True)
class UncertaintyModel:
    epsilon_w: float = 10.0
    ball: str = "box"  # or "l2"
    n_jammers: int = 3

    def validate(self) -> None:
        if not self.epsilon_w >= 0:
            raise ConfigError("uncertainty.epsilon_w must be >= 0")
        if self.ball not in ("box", "l2"):
            raise ConfigError("uncertainty.ball must be 'box' or 'l2'")

    @property
    def eps_channel_w(self) -> float:
        return self.n_jammers * self.epsilon_w


@dataclass(frozen=True)
class TrainingConfig:
    episodes: int = 2000
    lr: float = 0.01
    lr_decay: float = 0.999
    lr_min: float = 1e-4
    gamma: float = 0.3
    batch_size: int = 128
    buffer_frequency: int = 2000
    buffer_power: int = 3000
    buffer_modulation: int = 3000
    hidden: tuple[int, ...] = (32, 32, 32)
    target_sync: int = 10
    explore_start: float = 1.0
    explore_end: float = 0.01
    explore_fraction: float = 0.6
    max_grad_norm: float = 10.0
    pgd_steps: int = 20
    pgd_step_frac: float = 0.05
    delta: float = -100.0
    compression_coeff: float = 0.005
    omega_frequency: float = 0.5
    omega_power: float = 0.5
    omega_modulation: float = 0.5
    # throughput rewards are divided by this before entering the networks
    reward_scale_bps: float = 1e6
    # power-like observations are divided by this before entering the networks
    p_ref_w: float = 10.0

    def validate(self) -> None:
        if self.episodes < 0:
            raise ConfigError("training.episodes must be >= 0")
        if not self.lr > 0:
            raise ConfigError("training.lr must be > 0")
        if not 0 <= self.gamma < 1:
            raise ConfigError("training.gamma must be in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("training.batch_size must be >= 1")
        for name in ("buffer_frequency", "buffer_power", "buffer_modulation"):
            if getattr(self, name) < 1:
                raise ConfigError(f"training.{name} must be >= 1")
        if self.pgd_steps < 1:
            raise ConfigError("training.pgd_steps must be >= 1")
        if not 0 < self.pgd_step_frac <= 1:
            raise ConfigError("training.pgd_step_frac must be in (0, 1]")
        if not self.delta < 0:
            raise ConfigError("training.delta must be < 0")
        if not self.compression_coeff >= 0:
            raise ConfigError("training.compression_coeff must be >= 0")
        for name in ("omega_frequency", "omega_power", "omega_modulation"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"training.{name} must be in [0, 1]")
        if self.target_sync < 1:
            raise ConfigError("training.target_sync must be >= 1")
        if not (self.p_ref_w > 0 and self.reward_scale_bps > 0):
            raise ConfigError("training.p_ref_w and training.reward_scale_bps must be > 0")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("training.hidden sizes must be >= 1")


@dataclass(frozen=True)
class ScenarioConfig:
    geometry: Geometry = field(default_factory=Geometry)
    radio: RadioPlan = field(default_factory=RadioPlan)
    jammers: tuple[JammerSpec, ...] = DEFAULT_JAMMERS
    timescale: TimescalePlan = field(default_factory=TimescalePlan)
    uncertainty: UncertaintyModel = field(default_factory=UncertaintyModel)
    training: TrainingConfig = field(default_factory=TrainingConfig)

    def validate(self) -> "ScenarioConfig":
        self.geometry.validate()
        self.radio.validate()
        self.timescale.validate()
        self.uncertainty.validate()
        self.training.validate()
        for j in self.jammers:
            j.validate(self.radio.n_channels, self.geometry.rx_pos, self.geometry.tx_pos)
        if self.uncertainty.n_jammers != len(self.jammers):
            raise ConfigError("uncertainty.n_jammers must equal the number of [jammers.N] sections")
        return self

    def with_epsilon(self, epsilon_w: float) -> "ScenarioConfig":
        return replace(self, uncertainty=replace(self.uncertainty, epsilon_w=float(epsilon_w)))

    def with_training(self, **kw: Any) -> "ScenarioConfig":
        return replace(self, training=replace(self.training, **kw))

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        """sha256 of the canonical JSON form of the resolved config."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Parsing

def _floats(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.replace(";", ",").split(",") if p.strip()]
    return tuple(float(p) for p in parts)


def _pair(text: str) -> tuple[float, float]:
    v = _floats(text)
    if len(v) != 2:
        raise ValueError("expected two comma-separated numbers")
    return (v[0], v[1])


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(float(x)) for x in _floats(text))


def _int(text: str) -> int:
    v = float(text)
    if v != int(v):
        raise ValueError("expected an integer")
    return int(v)


def _modulations(text: str) -> tuple[Modulation, ...]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, order = item.partition(":")
        if not order:
            raise ValueError("modulations are written as NAME:ORDER")
        out.append(Modulation(name.strip(), _int(order)))
    return tuple(out)


def _converter(ftype, name: str):
    if name in ("tx_pos", "rx_pos", "pos"):
        return _pair
    if name == "modulations":
        return _modulations
    if name == "hidden":
        return _ints
    if isinstance(ftype, str):
        ftype_s = ftype
    else:
        ftype_s = getattr(ftype, "__name__", str(ftype))
    if ftype_s.startswith("tuple[float"):
        return _floats
    if ftype_s == "int":
        return _int
    if ftype_s == "float":
        return float
    if ftype_s == "str":
        return lambda s: s.strip().lower() if name in ("kind", "direction", "ball") else s.strip()
    raise TypeError(f"no converter for {name}: {ftype_s}")


def _apply(obj, section: str, items: dict[str, str], aliases: dict[str, str] | None = None):
    aliases = aliases or {}
    known = {f.name: f for f in fields(obj)}
    updates = {}
    for raw_key, raw_val in items.items():
        key = aliases.get(raw_key, raw_key)
        if key not in known:
            raise ConfigError(f"unknown key [{section}] {raw_key}")
        try:
            updates[key] = _converter(known[key].type, key)(raw_val)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"[{section}] {raw_key}: cannot parse {raw_val!r} ({exc})") from None
    return replace(obj, **updates)


_SECTIONS = ("geometry", "radio", "timescale", "uncertainty", "training")


def parse_config_text(text: str, source: str = "<string>") -> ScenarioConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep key case so errors echo what the user wrote
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: malformed config: {exc}") from None

    cfg = ScenarioConfig()
    jammer_sections = []
    for sec in cp.sections():
        if sec.startswith("jammers."):
            try:
                idx = int(sec.split(".", 1)[1])
            except ValueError:
                raise ConfigError(f"bad jammer section name [{sec}]") from None
            jammer_sections.append((idx, sec))
        elif sec not in _SECTIONS and sec != "jammers":
            raise ConfigError(f"unknown section [{sec}]")

    geometry = _apply(cfg.geometry, "geometry", dict(cp["geometry"])) if cp.has_section("geometry") else cfg.geometry
    radio = _apply(cfg.radio, "radio", dict(cp["radio"])) if cp.has_section("radio") else cfg.radio
    timescale = _apply(cfg.timescale, "timescale", dict(cp["timescale"])) if cp.has_section("timescale") else cfg.timescale
    training = _apply(cfg.training, "training", dict(cp["training"])) if cp.has_section("training") else cfg.training

    jammers = list(cfg.jammers)
    if cp.has_section("jammers"):
        items = dict(cp["jammers"])
        extra = set(items) - {"count"}
        if extra:
            raise ConfigError(f"unknown key [jammers] {sorted(extra)[0]}")
        if "count" in items:
            try:
                count = _int(items["count"])
            except ValueError:
                raise ConfigError("[jammers] count must be an integer") from None
            if not 0 <= count <= len(jammers):
                raise ConfigError(f"[jammers] count must be in [0, {len(jammers)}]; add [jammers.N] sections for more")
            jammers = jammers[:count]
    for idx, sec in sorted(jammer_sections):
        if idx < 1:
            raise ConfigError(f"jammer sections are numbered from 1, got [{sec}]")
        if idx <= len(jammers):
            base = jammers[idx - 1]
        elif idx == len(jammers) + 1:
            items = dict(cp[sec])
            for req in ("kind", "pos", "power_dbm"):
                if req not in items:
                    raise ConfigError(f"[{sec}] new jammer needs key {req}")
            base = JammerSpec("comb", (0.0, 0.0), 0.0)
        else:
            raise ConfigError(f"jammer sections must be contiguous, got [{sec}]")
        updated = _apply(base, sec, dict(cp[sec]))
        if idx <= len(jammers):
            jammers[idx - 1] = updated
        else:
            jammers.append(updated)

    uncertainty = replace(cfg.uncertainty, n_jammers=len(jammers))
    if cp.has_section("uncertainty"):
        items = dict(cp["uncertainty"])
        if "n_jammers" in items:
            raise ConfigError("[uncertainty] n_jammers is derived from the jammer sections")
        uncertainty = _apply(uncertainty, "uncertainty", items)

    cfg = ScenarioConfig(geometry, radio, tuple(jammers), timescale, uncertainty, training)
    return cfg.validate()


def parse_config(path: str | Path | None) -> ScenarioConfig:
    """Load a scenario file; ``None`` gives the built-in default scenario."""
    if path is None:
        return ScenarioConfig().validate()
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config_text(p.read_text(), source=str(p))


def default_config() -> ScenarioConfig:
    return ScenarioConfig().validate()

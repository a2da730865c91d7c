"""Jammed single-link simulator with bounded sensing error.

The link runs on two timescales: the channel is fixed for a long slot
(``l`` short slots) while power and modulation are chosen every short
slot.  Jammers act per short slot.  Fading is block Rayleigh: one
``|h|^2 ~ Exp(1)`` per link per short slot, flat across channels.

All physical quantities are SI (W, Hz, bit/s) unless a name says dBm/dB.
Observation vectors handed to networks are divided by ``p_ref_w``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import Modulation, RadioPlan, ScenarioConfig


class GeometryError(ValueError):
    """Non-positive distance in a path-gain computation."""


class ActionError(ValueError):
    """Action index outside the configured discrete set."""


# ---------------------------------------------------------------------------
# Link physics

def channel_gain(d: float, d0: float, tau: float, h_sq: float = 1.0) -> float:
    if not d > 0 or not d0 > 0:
        raise GeometryError(f"distances must be positive (d={d}, d0={d0})")
    if h_sq < 0:
        raise ValueError("h_sq must be >= 0")
    return (d / d0) ** (-tau) * h_sq


def dbm_to_watts(p_dbm: float) -> float:
    if not math.isfinite(p_dbm):
        raise ValueError("dBm value must be finite")
    return 10.0 ** (p_dbm / 10.0) / 1000.0


def watts_to_dbm(p_w: float) -> float:
    if not p_w > 0:
        raise ValueError(f"power must be > 0 W to convert to dBm, got {p_w}")
    return 10.0 * math.log10(1000.0 * p_w)


def to_db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


def sjnr(p_received_w: float, jam_received_w, noise_w: float) -> float:
    """Signal to jamming-plus-noise ratio.

    ``jam_received_w`` lists only the jammers on the active channel; the
    caller applies the co-channel gate.
    """
    if not noise_w > 0:
        raise ValueError("noise power must be > 0")
    return p_received_w / (float(np.sum(jam_received_w)) + noise_w)


def _lookup(plan: RadioPlan, v) -> Modulation:
    if isinstance(v, Modulation):
        if v not in plan.modulations:
            raise ValueError(f"unknown modulation {v.name}")
        return v
    if isinstance(v, str):
        for m in plan.modulations:
            if m.name == v:
                return m
        raise ValueError(f"unknown modulation {v!r}")
    return plan.modulations[int(v)]


def mod_scale(v, beta: float, plan: RadioPlan) -> float:
    """Throughput scaling of modulation ``v`` at SJNR ``beta`` (linear).

    Zero below the scheme's demodulation threshold, otherwise the bits per
    symbol relative to the highest-order scheme in the plan.
    """
    m = _lookup(plan, v)
    if to_db(beta) < plan.threshold_db(m):
        return 0.0
    top = plan.modulations_by_order[0]
    return m.bits / top.bits


def slot_throughput(v, p_tx_w: float, gain_tx: float, jam_w: float, noise_w: float,
                    bandwidth_hz: float, plan: RadioPlan) -> tuple[float, int]:
    """Realized rate of one short slot and its success flag.

    A slot whose rate falls short of the threshold delivers nothing.
    """
    beta = sjnr(p_tx_w * gain_tx, [jam_w], noise_w)
    rate = mod_scale(v, beta, plan) * bandwidth_hz * math.log2(1.0 + beta)
    mu = 1 if (rate > 0 and rate >= plan.throughput_threshold_bps) else 0
    return mu * rate, mu


def reward_modulation(beta: float, a_v, plan: RadioPlan) -> float:
    """Shaped modulation reward.

    Buckets ``beta`` (in dB) against the demodulation thresholds; inside a
    bucket only schemes at or below the highest admissible order earn
    ``coeff * penalty * bits(a) / bits(v_max_valid)``.  Below the lowest
    listed threshold only the lowest-order scheme earns the fixed floor.
    Thresholds are inclusive, matching ``mod_scale``.
    """
    m = _lookup(plan, a_v)
    ranked = plan.modulations_by_order
    beta_db = to_db(beta)
    for i, thr in enumerate(plan.demod_thresholds_db):
        if beta_db >= thr:
            v_max_valid = ranked[i]
            if m.order > v_max_valid.order:
                return 0.0
            return plan.mod_reward_coeffs[i] * plan.suboptimal_penalty * m.bits / v_max_valid.bits
    return plan.mod_reward_floor if m == ranked[-1] else 0.0


def reward_power(outcome: "SlotOutcome") -> float:
    return outcome.throughput_bps


def reward_frequency(outcomes) -> float:
    return float(sum(o.throughput_bps for o in outcomes))


def sense(true_jam_w, eps_channel_w: float, rng: np.random.Generator, ball: str = "box") -> np.ndarray:
    """Perturbed per-channel jamming observation.

    Box: each channel independently uniform in ``[s - eps, s + eps]``.
    L2: a uniform point of the ``eps`` ball added to the whole vector.
    Results are clamped at 0 W.  The RNG is always advanced by the same
    amount so that ``eps = 0`` and ``eps > 0`` runs stay aligned.
    """
    s = np.asarray(true_jam_w, dtype=float)
    n = s.shape[0]
    if ball == "box":
        u = rng.uniform(-1.0, 1.0, size=n)
    elif ball == "l2":
        g = rng.standard_normal(n)
        r = rng.uniform() ** (1.0 / n)
        norm = np.linalg.norm(g)
        u = g * (r / norm) if norm > 0 else np.zeros(n)
    else:
        raise ValueError(f"unknown ball {ball!r}")
    if eps_channel_w == 0:
        return s.copy()
    return np.maximum(s + eps_channel_w * u, 0.0)


# ---------------------------------------------------------------------------
# Observation vectors

def frequency_state(window_jam_w, noise_w: float, p_ref_w: float) -> np.ndarray:
    """Per-channel mean of (jamming + noise) over a long slot, normalized."""
    w = np.asarray(window_jam_w, dtype=float)
    return (w.mean(axis=0) + noise_w) / p_ref_w


def power_state(t_index: int, l: int, jam_on_channel_w: float, noise_w: float, p_ref_w: float) -> np.ndarray:
    return np.array([t_index / l, (jam_on_channel_w + noise_w) / p_ref_w])


def modulation_state(t_index: int, l: int, jam_on_channel_w: float, noise_w: float,
                     p_tx_w: float, p_ref_w: float) -> np.ndarray:
    return np.array([t_index / l, (jam_on_channel_w + noise_w) / p_ref_w, p_tx_w / p_ref_w])


def build_states(window_jam_w, t_index: int, l: int, channel: int, slot_jam_w, p_tx_w: float,
                 noise_w: float, p_ref_w: float):
    """The three network inputs for one decision point.

    ``window_jam_w`` holds the previous long slot's ``l`` sensed vectors,
    ``slot_jam_w`` the current slot's sensed vector.
    """
    s_f = frequency_state(window_jam_w, noise_w, p_ref_w)
    x = float(np.asarray(slot_jam_w)[channel])
    return (s_f, power_state(t_index, l, x, noise_w, p_ref_w),
            modulation_state(t_index, l, x, noise_w, p_tx_w, p_ref_w))


# which coordinates of each role's state carry sensed power (and are perturbed)
def perturbation_mask(role: str, n_channels: int) -> np.ndarray:
    if role == "frequency":
        return np.ones(n_channels, dtype=bool)
    if role == "power":
        return np.array([False, True])
    if role == "modulation":
        return np.array([False, True, False])
    raise ValueError(f"unknown role {role!r}")


def state_dims(n_channels: int) -> dict[str, int]:
    return {"frequency": n_channels, "power": 2, "modulation": 3}


# ---------------------------------------------------------------------------
# Simulator

@dataclass
class SlotOutcome:
    slot: int
    channel: int
    power_idx: int
    mod_idx: int
    true_jam_w: np.ndarray
    sensed_jam_w: np.ndarray
    beta: float
    throughput_bps: float
    mu: int
    detected: bool = False


@dataclass
class _CognitiveMemory:
    armed: bool = False
    channel: int = -1


@dataclass
class _Slot:
    index: int
    h_tr: float
    h_jr: np.ndarray
    h_tj: np.ndarray
    true_jam_w: np.ndarray
    sensed_jam_w: np.ndarray
    jam_by_jammer: list = field(default_factory=list)


class AntiJamEnv:
    """Seedable multi-timescale simulator.

    Typical use::

        env.reset()
        while not env.done:
            s_f_obs = env.frequency_observation()
            env.start_long_slot(channel)
            for _ in range(env.l):
                sensed = env.sense_slot()
                outcome = env.transmit(power_idx, mod_idx)

    ``fading_rng`` drives every ``|h|^2`` draw, ``sense_rng`` the
    observation error.  Keeping them apart lets an ``eps = 0`` run and an
    ``eps > 0`` run share the same fading realization.
    """

    def __init__(self, cfg: ScenarioConfig, fading_rng: np.random.Generator,
                 sense_rng: np.random.Generator, eps_channel_w: float | None = None,
                 fixed_fading: bool = False):
        self.cfg = cfg
        self.radio = cfg.radio
        self.k = cfg.timescale.k
        self.l = cfg.timescale.l
        self.n = cfg.radio.n_channels
        self.noise_w = dbm_to_watts(cfg.radio.noise_dbm)
        self.p_ref_w = cfg.training.p_ref_w
        self.power_w = np.array([dbm_to_watts(p) for p in cfg.radio.power_levels_dbm])
        self.eps_channel_w = cfg.uncertainty.eps_channel_w if eps_channel_w is None else float(eps_channel_w)
        self.ball = cfg.uncertainty.ball
        self.fading_rng = fading_rng
        self.sense_rng = sense_rng
        self.fixed_fading = fixed_fading

        g = cfg.geometry
        self.path_tr = channel_gain(math.dist(g.tx_pos, g.rx_pos), g.d0_km, g.tau)
        self.jammers = cfg.jammers
        self.jam_power_w = np.array([dbm_to_watts(j.power_dbm) for j in self.jammers])
        self.path_jr = np.array([channel_gain(math.dist(j.pos, g.rx_pos), g.d0_km, g.tau)
                                 for j in self.jammers])
        self.cognitive = [i for i, j in enumerate(self.jammers) if j.kind == "cognitive"]
        self.path_tj = np.array([channel_gain(math.dist(self.jammers[i].pos, g.tx_pos), g.d0_km, g.tau)
                                 for i in self.cognitive])
        self.detect_w = np.array([dbm_to_watts(self.jammers[i].detect_threshold_dbm)
                                  for i in self.cognitive])
        self.reset()

    # -- episode bookkeeping ------------------------------------------------
    def reset(self) -> None:
        self.slot = -self.l
        self.long_index = 0
        self.channel: int | None = None
        self._memory = [_CognitiveMemory() for _ in self.cognitive]
        self._current: _Slot | None = None
        self._window_sensed: list[np.ndarray] = []
        self._window_true: list[np.ndarray] = []
        self._in_long = False
        self.outcomes: list[SlotOutcome] = []
        # silent observation window: receiver senses, transmitter stays off
        for _ in range(self.l):
            self._draw_slot()
            self._window_sensed.append(self._current.sensed_jam_w)
            self._window_true.append(self._current.true_jam_w)
            self._finish_slot(tx_power_w=0.0, channel=None)

    @property
    def done(self) -> bool:
        return self.long_index >= self.k

    @property
    def t_index(self) -> int:
        return (self.slot % self.l) if self.slot >= 0 else 0

    # -- jammers -------------------------------------------------------------
    def _draw_fading(self):
        m = 1 + len(self.jammers) + len(self.cognitive)
        if self.fixed_fading:
            h = np.ones(m)
        else:
            h = self.fading_rng.exponential(1.0, size=m)
        return h[0], h[1:1 + len(self.jammers)], h[1 + len(self.jammers):]

    def jammer_step(self, slot_index: int, h_jr: np.ndarray) -> tuple[np.ndarray, list]:
        """True received jamming power per channel for one short slot."""
        jam = np.zeros(self.n)
        per_jammer = []
        cog_pos = {ji: ci for ci, ji in enumerate(self.cognitive)}
        for i, spec in enumerate(self.jammers):
            rx_w = self.jam_power_w[i] * self.path_jr[i] * h_jr[i]
            if spec.kind == "comb":
                chans = spec.jammed_channels(slot_index, self.n)
            else:
                mem = self._memory[cog_pos[i]]
                chans = frozenset([mem.channel]) if mem.armed else frozenset()
            for c in chans:
                jam[c] += rx_w
            per_jammer.append(chans)
        return jam, per_jammer

    def _draw_slot(self) -> None:
        h_tr, h_jr, h_tj = self._draw_fading()
        true_jam, per_jammer = self.jammer_step(self.slot, h_jr)
        sensed = sense(true_jam, self.eps_channel_w, self.sense_rng, self.ball)
        self._current = _Slot(self.slot, h_tr, h_jr, h_tj, true_jam, sensed, per_jammer)

    def _finish_slot(self, tx_power_w: float, channel: int | None) -> bool:
        detected_any = False
        for ci, mem in enumerate(self._memory):
            if channel is None or tx_power_w <= 0:
                mem.armed = False
                continue
            at_jammer = tx_power_w * self.path_tj[ci] * self._current.h_tj[ci]
            mem.armed = bool(at_jammer > self.detect_w[ci])
            mem.channel = channel
            detected_any |= mem.armed
        self.slot += 1
        self._current = None
        return detected_any

    # -- agent interface -----------------------------------------------------
    def frequency_observation(self, true: bool = False) -> np.ndarray:
        """Normalized frequency state from the last completed long slot."""
        window = self._window_true if true else self._window_sensed
        return frequency_state(window, self.noise_w, self.p_ref_w)

    def start_long_slot(self, channel: int) -> None:
        if self.done:
            raise RuntimeError("episode finished")
        if self._in_long:
            raise RuntimeError("previous long slot not finished")
        if not 0 <= int(channel) < self.n:
            raise ActionError(f"channel {channel} out of range [0, {self.n})")
        self.channel = int(channel)
        self._in_long = True
        self._window_sensed = []
        self._window_true = []

    def sense_slot(self, true: bool = False) -> np.ndarray:
        """Jamming observation for the current short slot (raw W per channel)."""
        if not self._in_long:
            raise RuntimeError("call start_long_slot first")
        if self._current is None:
            self._draw_slot()
        return (self._current.true_jam_w if true else self._current.sensed_jam_w).copy()

    def power_observation(self, true: bool = False) -> np.ndarray:
        jam = self.sense_slot(true)
        return power_state(self.t_index, self.l, jam[self.channel], self.noise_w, self.p_ref_w)

    def modulation_observation(self, power_idx: int, true: bool = False) -> np.ndarray:
        jam = self.sense_slot(true)
        return modulation_state(self.t_index, self.l, jam[self.channel], self.noise_w,
                                self.power_w[self._check_power(power_idx)], self.p_ref_w)

    def _check_power(self, power_idx: int) -> int:
        if not 0 <= int(power_idx) < len(self.power_w):
            raise ActionError(f"power index {power_idx} out of range")
        return int(power_idx)

    def transmit(self, power_idx: int, mod_idx: int) -> SlotOutcome:
        if not self._in_long:
            raise RuntimeError("call start_long_slot first")
        power_idx = self._check_power(power_idx)
        if not 0 <= int(mod_idx) < len(self.radio.modulations):
            raise ActionError(f"modulation index {mod_idx} out of range")
        if self._current is None:
            self._draw_slot()
        cur = self._current
        p_w = self.power_w[power_idx]
        gain = self.path_tr * cur.h_tr
        beta = sjnr(p_w * gain, [cur.true_jam_w[self.channel]], self.noise_w)
        tput, mu = slot_throughput(int(mod_idx), p_w, gain, cur.true_jam_w[self.channel],
                                   self.noise_w, self.radio.bandwidth_hz, self.radio)
        out = SlotOutcome(cur.index, self.channel, power_idx, int(mod_idx), cur.true_jam_w,
                          cur.sensed_jam_w, beta, tput, mu)
        self._window_sensed.append(cur.sensed_jam_w)
        self._window_true.append(cur.true_jam_w)
        out.detected = self._finish_slot(p_w, self.channel)
        self.outcomes.append(out)
        if len(self._window_sensed) == self.l:
            self._in_long = False
            self.long_index += 1
        return out

    def advance(self, channel: int, slot_actions) -> list[SlotOutcome]:
        """Run one long slot with scripted ``(power_idx, mod_idx)`` pairs."""
        slot_actions = list(slot_actions)
        if len(slot_actions) != self.l:
            raise ActionError(f"need {self.l} (power, modulation) pairs, got {len(slot_actions)}")
        self.start_long_slot(channel)
        return [self.transmit(p, v) for p, v in slot_actions]

    def run_scripted(self, schedule):
        """Play a full episode; ``schedule`` yields ``(channel, [(p, v), ...])``."""
        self.reset()
        outcomes = []
        for channel, slot_actions in schedule:
            if self.done:
                break
            outcomes.extend(self.advance(channel, slot_actions))
        return outcomes

    # -- helpers for baselines -----------------------------------------------
    def expected_sjnr(self, p_tx_w: float, jam_w: float) -> float:
        """SJNR estimate with unit fading (used by the greedy baseline)."""
        return sjnr(p_tx_w * self.path_tr, [jam_w], self.noise_w)

    def clone(self) -> "AntiJamEnv":
        import copy
        return copy.deepcopy(self)

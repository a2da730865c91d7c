"""Decision makers that the episode runner can drive.

A policy answers three questions per decision point: which channel for
the next long slot, which power level, which modulation.  Learned
bundles and the scripted baselines share this interface.
"""

from __future__ import annotations

import math

import numpy as np

from ..config import ScenarioConfig
from ..environment import channel_gain, dbm_to_watts, to_db


class Policy:
    name = "policy"
    # single-timescale behaviour: power and modulation chosen once per long slot
    hold_within_long = False
    fixed_power_idx: int | None = None

    def frequency(self, obs: np.ndarray) -> int:
        raise NotImplementedError

    def power(self, obs: np.ndarray) -> int:
        raise NotImplementedError

    def modulation(self, obs: np.ndarray) -> int:
        raise NotImplementedError


def _path_tr(cfg: ScenarioConfig) -> float:
    g = cfg.geometry
    return channel_gain(math.dist(g.tx_pos, g.rx_pos), g.d0_km, g.tau)


def greedy_modulation(cfg: ScenarioConfig, sjnr_est: float) -> int:
    """Index of the highest-order scheme whose threshold the estimate clears."""
    plan = cfg.radio
    est_db = to_db(sjnr_est)
    for m in plan.modulations_by_order:
        if est_db >= plan.threshold_db(m):
            return plan.modulations.index(m)
    return plan.modulations.index(plan.modulations_by_order[-1])


def greedy_policy(cfg: ScenarioConfig, freq_obs, slot_level_norm: float) -> tuple[int, int, int]:
    """Scripted greedy decisions from normalized observations.

    Quietest sensed channel (lowest index on ties), top power, and the
    best modulation admissible under a unit-fading SJNR estimate built
    from the sensed jamming-plus-noise level ``slot_level_norm``.
    """
    channel = int(np.argmin(np.asarray(freq_obs)))
    p_idx = int(np.argmax(cfg.radio.power_levels_dbm))
    p_w = dbm_to_watts(cfg.radio.power_levels_dbm[p_idx])
    level_w = max(slot_level_norm * cfg.training.p_ref_w, dbm_to_watts(cfg.radio.noise_dbm))
    est = p_w * _path_tr(cfg) / level_w
    return channel, p_idx, greedy_modulation(cfg, est)


def random_policy(cfg: ScenarioConfig, rng: np.random.Generator) -> tuple[int, int, int]:
    return (int(rng.integers(cfg.radio.n_channels)), int(rng.integers(len(cfg.radio.power_levels_dbm))),
            int(rng.integers(len(cfg.radio.modulations))))


class GreedyPolicy(Policy):
    name = "greedy"

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.p_ref = cfg.training.p_ref_w
        self.path_tr = _path_tr(cfg)
        self.noise_w = dbm_to_watts(cfg.radio.noise_dbm)
        self.p_idx = int(np.argmax(cfg.radio.power_levels_dbm))

    def frequency(self, obs):
        return int(np.argmin(obs))

    def power(self, obs):
        return self.p_idx

    def modulation(self, obs):
        # obs = [t/l, (jam + noise)/P_ref, p_tx/P_ref]
        level_w = max(obs[1] * self.p_ref, self.noise_w)
        return greedy_modulation(self.cfg, obs[2] * self.p_ref * self.path_tr / level_w)


class RandomPolicy(Policy):
    name = "random"

    def __init__(self, cfg: ScenarioConfig, rng: np.random.Generator):
        self.n_ch = cfg.radio.n_channels
        self.n_p = len(cfg.radio.power_levels_dbm)
        self.n_v = len(cfg.radio.modulations)
        self.rng = rng

    def frequency(self, obs):
        return int(self.rng.integers(self.n_ch))

    def power(self, obs):
        return int(self.rng.integers(self.n_p))

    def modulation(self, obs):
        return int(self.rng.integers(self.n_v))


class FixedPolicy(Policy):
    """Constant actions; handy for scripted checks."""
    name = "fixed"

    def __init__(self, channel: int = 0, power_idx: int = 0, mod_idx: int = 0):
        self.c, self.p, self.v = channel, power_idx, mod_idx

    def frequency(self, obs):
        return self.c

    def power(self, obs):
        return self.p

    def modulation(self, obs):
        return self.v


class BundlePolicy(Policy):
    """Greedy (explore_p = 0) read-out of a trained bundle."""

    def __init__(self, bundle):
        self.bundle = bundle
        self.name = bundle.algorithm
        self.hold_within_long = bundle.variant.single_timescale
        self.fixed_power_idx = bundle.fixed_power_idx

    def _act(self, role, obs):
        return int(np.argmax(self.bundle.roles[role].current.forward(obs)))

    def frequency(self, obs):
        return self._act("frequency", obs)

    def power(self, obs):
        if self.fixed_power_idx is not None:
            return self.fixed_power_idx
        return self._act("power", obs)

    def modulation(self, obs):
        return self._act("modulation", obs)

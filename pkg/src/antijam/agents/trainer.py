"""Episode-level training of the three cooperating value networks.

One long slot: the frequency net picks a channel, then for each of the
``l`` short slots the power net picks a level and the modulation net a
scheme.  Power and modulation learn per short slot, frequency per long
slot.  All three algorithms share this loop and differ only in the loss:

* ``MT``  plain double-DQN loss
* ``PGD`` adds a worst-case margin hinge at a PGD-found observation
* ``NQC`` adds the misleading-action penalty on compressed IBP bounds

Training always observes true states; the robust terms model the
sensing error internally.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..config import ScenarioConfig
from ..environment import AntiJamEnv, perturbation_mask, reward_modulation, state_dims
from ..neural import QNetwork, TrainingError, sgd_step
from ..seeding import stream
from .losses import AttackSpec, combined_loss_nqc, combined_loss_pgd, epsilon_greedy, td_loss
from .replay import ReplayBuffer

ALGORITHMS = ("MT", "PGD", "NQC")
ROLES = ("frequency", "power", "modulation")
# shaped modulation rewards (hundreds to low thousands) are brought to O(1)
MOD_REWARD_SCALE = 1000.0
LOG_FIELDS = ("episode", "loss_f", "loss_p", "loss_v", "episode_throughput_bits", "explore_p", "lr")


@dataclass(frozen=True)
class Variant:
    """Ablation switches; the default is the full system."""
    single_timescale: bool = False
    fixed_max_power: bool = False
    reward_shaping: bool = True

    @property
    def name(self) -> str:
        if self.single_timescale:
            return "single_timescale"
        if self.fixed_max_power:
            return "fixed_max_power"
        if not self.reward_shaping:
            return "no_reward_shaping"
        return "full"


VARIANTS = {
    "full": Variant(),
    "single_timescale": Variant(single_timescale=True),
    "fixed_max_power": Variant(fixed_max_power=True),
    "no_reward_shaping": Variant(reward_shaping=False),
}


def normalize_algorithm(name: str) -> str:
    key = name.upper().replace("-DDQN", "")
    if key not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {name!r} (expected one of mt, pgd, nqc)")
    return key


def exploration(episode: int, cfg_train, episodes: int) -> float:
    """Linear decay over the first ``explore_fraction`` of the run, then flat."""
    span = cfg_train.explore_fraction * episodes
    if span <= 0:
        return cfg_train.explore_end
    frac = min(1.0, episode / span)
    return cfg_train.explore_start + (cfg_train.explore_end - cfg_train.explore_start) * frac


def learning_rate(episode: int, cfg_train) -> float:
    return max(cfg_train.lr * cfg_train.lr_decay ** episode, cfg_train.lr_min)


@dataclass
class RoleAgent:
    role: str
    current: QNetwork
    target: QNetwork
    buffer: ReplayBuffer
    omega: float


@dataclass
class AgentBundle:
    algorithm: str
    roles: dict
    gamma: float
    seed: int
    variant: Variant = field(default_factory=Variant)
    fixed_power_idx: int | None = None
    episodes: int = 0
    config_digest: str = ""

    def act(self, role: str, obs) -> int:
        return int(np.argmax(self.roles[role].current.forward(obs)))

    def manifest(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": self.seed,
            "gamma": self.gamma,
            "episodes": self.episodes,
            "variant": asdict(self.variant),
            "fixed_power_idx": self.fixed_power_idx,
            "omega": {r: a.omega for r, a in self.roles.items()},
            "layer_dims": {r: a.current.layer_dims for r, a in self.roles.items()},
            "config_digest": self.config_digest,
        }

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for r, a in self.roles.items():
            a.current.save(d / f"{r}_current.qnet")
            a.target.save(d / f"{r}_target.qnet")
        (d / "bundle.json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "AgentBundle":
        d = Path(directory)
        meta_path = d / "bundle.json"
        if not meta_path.is_file():
            raise FileNotFoundError(f"no checkpoint manifest at {meta_path}")
        meta = json.loads(meta_path.read_text())
        roles = {}
        for r in ROLES:
            cur = QNetwork.load(d / f"{r}_current.qnet")
            tgt = QNetwork.load(d / f"{r}_target.qnet")
            roles[r] = RoleAgent(r, cur, tgt, ReplayBuffer(1, cur.n_inputs, cur.n_actions), meta["omega"][r])
        return cls(meta["algorithm"], roles, meta["gamma"], meta["seed"], Variant(**meta["variant"]),
                   meta["fixed_power_idx"], meta["episodes"], meta.get("config_digest", ""))


def build_bundle(algorithm: str, cfg: ScenarioConfig, seed: int, variant: Variant = Variant()) -> AgentBundle:
    algorithm = normalize_algorithm(algorithm)
    tr = cfg.training
    dims = state_dims(cfg.radio.n_channels)
    n_act = {"frequency": cfg.radio.n_channels, "power": len(cfg.radio.power_levels_dbm),
             "modulation": len(cfg.radio.modulations)}
    caps = {"frequency": tr.buffer_frequency, "power": tr.buffer_power, "modulation": tr.buffer_modulation}
    omegas = {"frequency": tr.omega_frequency, "power": tr.omega_power, "modulation": tr.omega_modulation}
    rng = stream(seed, "weights")
    roles = {}
    for r in ROLES:
        layers = [dims[r], *tr.hidden, n_act[r]]
        cur = QNetwork.init(layers, rng)
        roles[r] = RoleAgent(r, cur, cur.copy(), ReplayBuffer(caps[r], dims[r], n_act[r]),
                             1.0 if algorithm == "MT" else omegas[r])
    fixed = int(np.argmax(cfg.radio.power_levels_dbm)) if variant.fixed_max_power else None
    return AgentBundle(algorithm, roles, tr.gamma, seed, variant, fixed, 0, cfg.digest())


class Trainer:
    def __init__(self, algorithm: str, cfg: ScenarioConfig, seed: int, variant: Variant = Variant(),
                 episodes: int | None = None):
        self.cfg = cfg
        self.tr = cfg.training
        self.seed = int(seed)
        self.variant = variant
        self.episodes = self.tr.episodes if episodes is None else int(episodes)
        self.bundle = build_bundle(algorithm, cfg, seed, variant)
        self.algorithm = self.bundle.algorithm
        self.explore_rng = stream(seed, "explore")
        self.replay_rng = stream(seed, "replay")
        self.attack_rng = stream(seed, "attack")
        # sensing error plays no part in training, so the env senses exactly
        self.env = AntiJamEnv(cfg, stream(seed, "fading"), stream(seed, "perturb"), eps_channel_w=0.0)
        radius = cfg.uncertainty.eps_channel_w / self.tr.p_ref_w
        self.radius = radius
        self.masks = {r: perturbation_mask(r, cfg.radio.n_channels).astype(float) for r in ROLES}
        # delta floors a Q-gap and is given in raw reward units; rewards reach the networks divided
        # by a per-role unit, so delta is divided by it too. The compression coefficient acts on the
        # network's own Q-values and is used as configured.
        self.units = {r: self.reward_unit(r) for r in ROLES}
        self.delta = {r: self.tr.delta / self.units[r] for r in ROLES}
        self.coeff = {r: self.tr.compression_coeff for r in ROLES}
        self.log: list[dict] = []
        self._episode = 0
        self._lr = self.tr.lr

    def reward_unit(self, role: str) -> float:
        if role == "modulation" and self.variant.reward_shaping:
            return MOD_REWARD_SCALE
        return self.tr.reward_scale_bps

    # -- one gradient step -------------------------------------------------
    def update(self, role: str) -> float | None:
        agent = self.bundle.roles[role]
        if len(agent.buffer) < self.tr.batch_size:
            return None
        batch = agent.buffer.sample(self.tr.batch_size, self.replay_rng)
        cur, tgt, omega = agent.current, agent.target, agent.omega
        if self.algorithm == "MT" or omega == 1.0:
            loss, grads = td_loss(batch, cur, tgt, self.bundle.gamma)
        elif self.algorithm == "PGD":
            spec = AttackSpec(self.tr.pgd_steps, self.tr.pgd_step_frac, self.radius, self.cfg.uncertainty.ball)
            loss, grads, _ = combined_loss_pgd(batch, cur, tgt, self.bundle.gamma, omega, spec,
                                               self.delta[role], self.attack_rng, self.masks[role])
        else:
            loss, grads, _ = combined_loss_nqc(batch, cur, tgt, self.bundle.gamma, omega,
                                               self.radius * self.masks[role], self.coeff[role])
        if not math.isfinite(loss) or not grads.is_finite():
            raise TrainingError(f"{self.algorithm} diverged: non-finite loss in the {role} network "
                                f"at episode {self._episode} (loss={loss!r}, lr={self._lr!r})")
        norm = grads.global_norm()
        if self.tr.max_grad_norm > 0 and norm > self.tr.max_grad_norm:
            grads = grads.scaled(self.tr.max_grad_norm / norm)
        sgd_step(cur, grads, self._lr)
        return loss

    def _choose(self, role: str, obs, explore: float) -> int:
        return epsilon_greedy(self.bundle.roles[role].current.forward(obs), explore, self.explore_rng)

    # -- one episode -------------------------------------------------------
    def run_episode(self) -> dict:
        ep = self._episode
        explore = exploration(ep, self.tr, self.episodes)
        self._lr = learning_rate(ep, self.tr)
        env, roles, plan = self.env, self.bundle.roles, self.cfg.radio
        scale = self.tr.reward_scale_bps
        env.reset()
        losses = {r: [] for r in ROLES}
        total_bits = 0.0
        pending = {"power": None, "modulation": None}

        def store(role, state, action, reward, nxt, terminal):
            roles[role].buffer.push(state, action, nxt, reward, terminal)

        def flush(role, nxt):
            if pending[role] is not None:
                s, a, r = pending[role]
                store(role, s, a, r, nxt, False)
                pending[role] = None

        def learn(role):
            loss = self.update(role)
            if loss is not None:
                losses[role].append(loss)

        hold = self.variant.single_timescale
        fixed_p = self.bundle.fixed_power_idx
        while not env.done:
            s_f = env.frequency_observation(true=True)
            a_f = self._choose("frequency", s_f, explore)
            env.start_long_slot(a_f)
            long_bits = 0.0
            held = None
            acc = {"power": 0.0, "modulation": 0.0}
            for t in range(env.l):
                s_p = env.power_observation(true=True)
                if hold and held is not None:
                    a_p, a_v = held[0], held[1]
                    s_v = env.modulation_observation(a_p, true=True)
                else:
                    a_p = fixed_p if fixed_p is not None else self._choose("power", s_p, explore)
                    s_v = env.modulation_observation(a_p, true=True)
                    a_v = self._choose("modulation", s_v, explore)
                    if hold:
                        held = (a_p, a_v, s_p, s_v)
                out = env.transmit(a_p, a_v)
                long_bits += out.throughput_bps
                r_p = out.throughput_bps / scale
                if self.variant.reward_shaping:
                    r_v = reward_modulation(out.beta, a_v, plan) / MOD_REWARD_SCALE
                else:
                    r_v = r_p
                if hold:
                    acc["power"] += r_p
                    acc["modulation"] += r_v
                    continue
                if fixed_p is None:
                    flush("power", s_p)
                    pending["power"] = (s_p, a_p, r_p)
                    learn("power")
                flush("modulation", s_v)
                pending["modulation"] = (s_v, a_v, r_v)
                learn("modulation")
            if hold:
                _, _, s_p0, s_v0 = held
                for role, s0, a0 in (("power", s_p0, held[0]), ("modulation", s_v0, held[1])):
                    if role == "power" and fixed_p is not None:
                        continue
                    flush(role, s0)
                    pending[role] = (s0, a0, acc[role])
                    learn(role)
            total_bits += long_bits * self.cfg.timescale.short_s
            s_f2 = env.frequency_observation(true=True)
            store("frequency", s_f, a_f, long_bits / scale, s_f2, env.done)
            learn("frequency")
        for role in ("power", "modulation"):
            if pending[role] is not None:
                s, a, r = pending[role]
                store(role, s, a, r, s, True)
                pending[role] = None

        self._episode += 1
        self.bundle.episodes = self._episode
        if self._episode % self.tr.target_sync == 0:
            for agent in roles.values():
                agent.target.load_from(agent.current)
        row = {
            "episode": ep,
            "loss_f": _mean(losses["frequency"]),
            "loss_p": _mean(losses["power"]),
            "loss_v": _mean(losses["modulation"]),
            "episode_throughput_bits": total_bits,
            "explore_p": explore,
            "lr": self._lr,
        }
        self.log.append(row)
        return row

    def train(self, progress=None) -> AgentBundle:
        while self._episode < self.episodes:
            row = self.run_episode()
            if progress is not None:
                progress(row)
        return self.bundle


def _mean(xs) -> float:
    return float(np.mean(xs)) if xs else float("nan")


def train(algorithm: str, cfg: ScenarioConfig, seed: int, episodes: int | None = None,
          variant: Variant = Variant(), progress=None):
    """Train one bundle; returns ``(bundle, log_rows)``."""
    t = Trainer(algorithm, cfg, seed, variant, episodes)
    bundle = t.train(progress)
    return bundle, t.log


def log_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_FIELDS)
    for row in rows:
        w.writerow([row["episode"]] + [repr(float(row[k])) for k in LOG_FIELDS[1:]])
    return buf.getvalue()

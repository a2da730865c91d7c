"""Seeded evaluation: rollouts, robustness sweeps, decision accuracy,
ablations, Q-interval dumps and a numerical contraction check.

Per-run randomness: the fading stream depends only on the master seed,
so every run (and every epsilon) faces the same channel realization;
the sensing-error stream is keyed by ``(master seed, run id)``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .agents.losses import misleading_set, nqc_bounds
from .agents.policies import BundlePolicy, Policy
from .agents.trainer import ROLES, VARIANTS, AgentBundle, train
from .config import ScenarioConfig
from .environment import AntiJamEnv, perturbation_mask, state_dims
from .seeding import stream


@dataclass
class DecisionRecord:
    role: str
    slot: int
    true_obs: np.ndarray
    obs: np.ndarray
    action: int


@dataclass
class EpisodeStats:
    cumulative_throughput_bits: float
    freq_actions: list
    power_actions: list
    mod_actions: list
    beta: list
    mu: list
    seed: tuple
    decisions: list = field(default_factory=list)

    @property
    def trace(self) -> list:
        """Decisions in play order: f, (p, v) x l, f, ..."""
        out = []
        l = len(self.power_actions) // max(len(self.freq_actions), 1)
        for i, f in enumerate(self.freq_actions):
            out.append(("f", f))
            for j in range(i * l, (i + 1) * l):
                out.append(("p", self.power_actions[j]))
                out.append(("v", self.mod_actions[j]))
        return out


@dataclass(frozen=True)
class BoxStats:
    algorithm: str
    epsilon: float
    n_runs: int
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float

    @property
    def iqr(self) -> float:
        return self.q3 - self.q1


@dataclass(frozen=True)
class AccuracyReport:
    algorithm: str
    epsilon: float
    accuracy: float
    kappa: int


def quartiles(values) -> tuple[float, float, float, float, float]:
    """min, q1, median, q3, max with linear interpolation between order statistics."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("no values")
    q = np.quantile(v, [0.25, 0.5, 0.75], method="linear")
    return float(v[0]), float(q[0]), float(q[1]), float(q[2]), float(v[-1])


def box_stats(algorithm: str, epsilon: float, values) -> BoxStats:
    lo, q1, med, q3, hi = quartiles(values)
    return BoxStats(algorithm, float(epsilon), len(values), lo, q1, med, q3, hi, float(np.mean(values)))


def _as_policy(agent) -> Policy:
    if isinstance(agent, AgentBundle):
        return BundlePolicy(agent)
    return agent


def run_episode(agent, cfg: ScenarioConfig, eps_eval: float, seed: int, run_id: int = 0,
                record: bool = False) -> EpisodeStats:
    """Greedy rollout on perturbed observations; the link evolves on true jamming.

    ``eps_eval`` is the per-jammer radius in W; the per-channel radius is
    that times the jammer count.
    """
    policy = _as_policy(agent)
    if isinstance(agent, AgentBundle):
        dims = state_dims(cfg.radio.n_channels)
        for r in ROLES:
            if agent.roles[r].current.n_inputs != dims[r]:
                raise ValueError(f"{r} network expects {agent.roles[r].current.n_inputs} inputs, "
                                 f"scenario provides {dims[r]}")
    if eps_eval < 0:
        raise ValueError("eps_eval must be >= 0")
    env = AntiJamEnv(cfg, stream(seed, "fading"), stream(seed, "perturb", run_id),
                     eps_channel_w=cfg.uncertainty.n_jammers * eps_eval)
    stats = EpisodeStats(0.0, [], [], [], [], [], (seed, run_id))
    bits = 0.0
    while not env.done:
        obs_f = env.frequency_observation()
        a_f = policy.frequency(obs_f)
        if record:
            stats.decisions.append(DecisionRecord("frequency", env.slot, env.frequency_observation(true=True),
                                                  obs_f, a_f))
        env.start_long_slot(a_f)
        stats.freq_actions.append(a_f)
        held = None
        for t in range(env.l):
            obs_p = env.power_observation()
            if policy.hold_within_long and held is not None:
                a_p, a_v = held
                obs_v = env.modulation_observation(a_p)
            else:
                a_p = policy.fixed_power_idx if policy.fixed_power_idx is not None else policy.power(obs_p)
                obs_v = env.modulation_observation(a_p)
                a_v = policy.modulation(obs_v)
                held = (a_p, a_v)
                if record:
                    stats.decisions.append(DecisionRecord("power", env.slot, env.power_observation(true=True),
                                                          obs_p, a_p))
                    stats.decisions.append(DecisionRecord("modulation", env.slot,
                                                          env.modulation_observation(a_p, true=True), obs_v, a_v))
            out = env.transmit(a_p, a_v)
            stats.power_actions.append(a_p)
            stats.mod_actions.append(a_v)
            stats.beta.append(out.beta)
            stats.mu.append(out.mu)
            bits += out.throughput_bps * cfg.timescale.short_s
    stats.cumulative_throughput_bits = bits
    return stats


def decision_accuracy(test: EpisodeStats, benchmark: EpisodeStats) -> float:
    a, b = test.trace, benchmark.trace
    if len(a) != len(b):
        raise ValueError(f"trace lengths differ ({len(a)} vs {len(b)})")
    if not a:
        return 1.0
    return sum(x == y for x, y in zip(a, b)) / len(a)


def robustness_sweep(agents: dict, cfg: ScenarioConfig, eps_list=(0, 5, 10, 15, 20), n_runs: int = 200,
                     seed: int = 0, benchmark=None):
    """Run every agent at every epsilon for ``n_runs`` runs.

    Returns ``(rows, boxes, accuracy)``: per-run sweep rows, BoxStats per
    (agent, eps) and AccuracyReports against ``benchmark`` (an agent whose
    eps = 0 trace is the reference; defaults to the agent named MT if any).
    """
    if benchmark is None and "MT" in agents:
        benchmark = agents["MT"]
    ref = run_episode(benchmark, cfg, 0.0, seed) if benchmark is not None else None
    rows, boxes, acc = [], [], []
    for name, agent in agents.items():
        for eps in eps_list:
            vals, hits = [], []
            for run in range(n_runs):
                st = run_episode(agent, cfg, float(eps), seed, run)
                vals.append(st.cumulative_throughput_bits)
                rows.append((name, float(eps), run, st.cumulative_throughput_bits))
                if ref is not None:
                    hits.append(decision_accuracy(st, ref))
            boxes.append(box_stats(name, eps, vals))
            if ref is not None:
                acc.append(AccuracyReport(name, float(eps), float(np.mean(hits)), n_runs))
    return rows, boxes, acc


def ablation_suite(cfg: ScenarioConfig, seeds, episodes: int | None = None, variants=None,
                   eval_seed: int = 0):
    """Train each variant (eps = 0) per seed and score one eps = 0 rollout.

    Returns rows ``(variant, seed, cumulative_throughput_bits)``.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    names = list(VARIANTS) if variants is None else list(variants)
    rows = []
    for name in names:
        for s in seeds:
            bundle, _ = train("MT", cfg, s, episodes, VARIANTS[name])
            st = run_episode(bundle, cfg, 0.0, eval_seed)
            rows.append((name, s, st.cumulative_throughput_bits))
    return rows


def q_interval_dump(bundle: AgentBundle, cfg: ScenarioConfig, eps: float, seed: int = 0, slots=None):
    """Point Q-values and compressed IBP intervals along one eps = 0 rollout.

    Returns rows ``(role, slot, action, q_point, q_low, q_high)``.
    """
    st = run_episode(bundle, cfg, 0.0, seed, record=True)
    radius = cfg.uncertainty.n_jammers * eps / cfg.training.p_ref_w
    coeff = cfg.training.compression_coeff
    rows = []
    for d in st.decisions:
        if slots is not None and d.slot not in slots:
            continue
        net = bundle.roles[d.role].current
        mask = perturbation_mask(d.role, cfg.radio.n_channels).astype(float)
        q = net.forward(d.true_obs)
        _, _, c_lo, c_hi, _ = nqc_bounds(net, d.true_obs, radius * mask, coeff)
        for a in range(q.shape[0]):
            rows.append((d.role, d.slot, a, float(q[a]), float(c_lo[0, a]), float(c_hi[0, a])))
    return rows


def certified_consistency(bundle: AgentBundle, cfg: ScenarioConfig, eps: float, n_runs: int = 200,
                          seed: int = 0):
    """Check that a certified decision survives the actual perturbation.

    At each visited decision point the box ``true_obs +- radius`` is
    pushed through IBP (uncompressed, i.e. sound).  When no other action
    can overtake the true-state greedy action anywhere in the box, the
    action taken on the perturbed observation must equal it.  Returns
    ``(n_certified, n_decisions, violations)``.
    """
    radius = cfg.uncertainty.n_jammers * eps / cfg.training.p_ref_w
    certified = total = 0
    violations = []
    for run in range(n_runs):
        st = run_episode(bundle, cfg, eps, seed, run, record=True)
        for d in st.decisions:
            if d.role == "power" and bundle.fixed_power_idx is not None:
                continue
            net = bundle.roles[d.role].current
            mask = perturbation_mask(d.role, cfg.radio.n_channels).astype(float)
            a_true = int(np.argmax(net.forward(d.true_obs)))
            lo, hi, _ = net.ibp_forward(d.true_obs - radius * mask, d.true_obs + radius * mask)
            total += 1
            if misleading_set(lo, hi, a_true):
                continue
            certified += 1
            if d.action != a_true:
                violations.append((run, d.role, d.slot, a_true, d.action))
    return certified, total, violations


# ---------------------------------------------------------------------------
# Worst-case Bellman operator on a toy MDP

@dataclass(frozen=True)
class ToyMDP:
    rewards: np.ndarray      # (S, A)
    transitions: np.ndarray  # (S, A, S), rows sum to 1
    observations: np.ndarray  # (S, K) perturbed observation ids per state
    policy: np.ndarray       # (n_obs, A) action probabilities per observation id


def toy_mdp(seed: int = 7, n_states: int = 4, n_actions: int = 2, n_perturb: int = 3) -> ToyMDP:
    rng = np.random.default_rng(seed)
    rewards = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    p = rng.uniform(size=(n_states, n_actions, n_states))
    p /= p.sum(axis=2, keepdims=True)
    n_obs = n_states * n_perturb
    obs = rng.integers(n_obs, size=(n_states, n_perturb))
    pol = rng.uniform(size=(n_obs, n_actions))
    pol /= pol.sum(axis=1, keepdims=True)
    return ToyMDP(rewards, p, obs, pol)


def worst_case_backup(mdp: ToyMDP, v: np.ndarray, gamma: float) -> np.ndarray:
    """``(T V)(s) = min over perturbed observations of the policy-weighted backup``."""
    q = mdp.rewards + gamma * mdp.transitions @ v           # (S, A)
    per_obs = np.einsum("ska,sa->sk", mdp.policy[mdp.observations], q)
    return per_obs.min(axis=1)


@dataclass(frozen=True)
class ContractionReport:
    max_ratio: float
    iterations: int
    fixed_point: np.ndarray
    fixed_point_spread: float


def contraction_probe(mdp: ToyMDP, gamma: float, n_pairs: int = 1000, seed: int = 0,
                      n_starts: int = 10, tol: float = 1e-10, max_iter: int = 10_000) -> ContractionReport:
    rng = np.random.default_rng(seed)
    s = mdp.rewards.shape[0]
    ratio = 0.0
    for _ in range(n_pairs):
        scale = 10.0 ** rng.uniform(-3, 3)
        v1 = rng.normal(size=s) * scale
        v2 = rng.normal(size=s) * scale
        den = np.max(np.abs(v1 - v2))
        if den == 0:
            continue
        num = np.max(np.abs(worst_case_backup(mdp, v1, gamma) - worst_case_backup(mdp, v2, gamma)))
        ratio = max(ratio, num / den)
    fixed, iters = [], 0
    for _ in range(n_starts):
        v = rng.normal(size=s) * 100.0
        for it in range(1, max_iter + 1):
            nv = worst_case_backup(mdp, v, gamma)
            done = np.max(np.abs(nv - v)) <= tol
            v = nv
            if done:
                break
        iters = max(iters, it)
        fixed.append(v)
    fixed = np.array(fixed)
    spread = float(np.max(np.abs(fixed - fixed[0])))
    return ContractionReport(float(ratio), iters, fixed[0], spread)


# ---------------------------------------------------------------------------
# CSV rendering (floats as shortest round-trip decimal)

def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


SWEEP_HEADER = ("algorithm", "epsilon_w", "run_id", "cumulative_throughput_bits")
ACCURACY_HEADER = ("algorithm", "epsilon_w", "accuracy")
ABLATION_HEADER = ("variant", "seed", "cumulative_throughput_bits")
QDUMP_HEADER = ("role", "slot", "action", "q_point", "q_low", "q_high")
BOX_HEADER = ("algorithm", "epsilon_w", "n_runs", "min", "q1", "median", "q3", "max", "mean")


def box_rows(boxes):
    return [(b.algorithm, b.epsilon, b.n_runs, b.min, b.q1, b.median, b.q3, b.max, b.mean) for b in boxes]


def accuracy_rows(reports):
    return [(r.algorithm, r.epsilon, r.accuracy) for r in reports]

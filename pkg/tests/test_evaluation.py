import numpy as np
import pytest

from antijam.agents import FixedPolicy, GreedyPolicy, RandomPolicy, train
from antijam.config import default_config, parse_config_text
from antijam.evaluation import (ABLATION_HEADER, SWEEP_HEADER, EpisodeStats, ablation_suite, box_stats,
                                contraction_probe, decision_accuracy, q_interval_dump, quartiles,
                                robustness_sweep, run_episode, to_csv, toy_mdp, worst_case_backup)
from antijam.seeding import stream

CFG = default_config()


@pytest.fixture(scope="module")
def mt_bundle():
    return train("MT", CFG.with_training(batch_size=16), 0, episodes=3)[0]


def stats_with(freq, power, mod):
    return EpisodeStats(0.0, list(freq), list(power), list(mod), [], [], (0, 0))


def test_zero_length_episode():
    cfg = parse_config_text("[timescale]\ntotal_ms = 0\n")
    st = run_episode(GreedyPolicy(cfg), cfg, 0.0, 0)
    assert st.cumulative_throughput_bits == 0.0
    assert st.trace == []


def test_trace_length_and_throughput_sum():
    st = run_episode(GreedyPolicy(CFG), CFG, 10.0, 3)
    k, l = CFG.timescale.k, CFG.timescale.l
    assert len(st.trace) == k + 2 * k * l
    # every slot contributes mu * psi * B * log2(1 + beta) for short_s seconds
    assert st.cumulative_throughput_bits > 0
    assert len(st.beta) == len(st.mu) == k * l


def test_rollout_deterministic(mt_bundle):
    a = run_episode(mt_bundle, CFG, 0.0, 5)
    b = run_episode(mt_bundle, CFG, 0.0, 5)
    assert a.cumulative_throughput_bits == b.cumulative_throughput_bits
    assert a.trace == b.trace and a.beta == b.beta


def test_always_fail_policy_scores_zero():
    # -100 dBm lands 20 dB under the noise floor before path loss, far below the BPSK threshold
    cfg = parse_config_text("[radio]\npower_levels_dbm = -100\n")
    st = run_episode(FixedPolicy(0, 0, 0), cfg, 0.0, 0)
    assert st.cumulative_throughput_bits == 0.0
    assert set(st.mu) == {0}


def test_dimension_mismatch_rejected(mt_bundle):
    cfg = parse_config_text("[radio]\nn_channels = 4\n")
    with pytest.raises(ValueError, match="inputs"):
        run_episode(mt_bundle, cfg, 0.0, 0)


def test_negative_eps_rejected():
    with pytest.raises(ValueError):
        run_episode(GreedyPolicy(CFG), CFG, -1.0, 0)


def test_eps_zero_ignores_run_id(mt_bundle):
    vals = {run_episode(mt_bundle, CFG, 0.0, 2, r).cumulative_throughput_bits for r in range(4)}
    assert len(vals) == 1


# -- statistics ------------------------------------------------------------------

def test_quartiles_one_to_eight():
    lo, q1, med, q3, hi = quartiles(range(1, 9))
    assert (lo, q1, med, q3, hi) == (1.0, 2.75, 4.5, 6.25, 8.0)


def test_single_run_box_collapses():
    b = box_stats("MT", 0.0, [7.5])
    assert b.min == b.q1 == b.median == b.q3 == b.max == b.mean == 7.5
    assert b.iqr == 0.0


def test_box_ordering_random_samples():
    rng = np.random.default_rng(0)
    for n in range(1, 40):
        b = box_stats("x", 1.0, rng.normal(size=n))
        assert b.min <= b.q1 <= b.median <= b.q3 <= b.max


def test_sweep_degenerate_at_eps_zero(mt_bundle):
    rows, boxes, acc = robustness_sweep({"MT": mt_bundle}, CFG, [0.0, 10.0], n_runs=3, seed=1)
    assert len(rows) == 6
    zero = boxes[0]
    assert zero.epsilon == 0.0 and zero.min == zero.max
    assert acc[0].accuracy == 1.0 and acc[0].kappa == 3
    assert all(0.0 <= r.accuracy <= 1.0 for r in acc)


def test_sweep_csv_repeatable(mt_bundle):
    a = robustness_sweep({"MT": mt_bundle}, CFG, [5.0], n_runs=2, seed=4)[0]
    b = robustness_sweep({"MT": mt_bundle}, CFG, [5.0], n_runs=2, seed=4)[0]
    assert to_csv(SWEEP_HEADER, a) == to_csv(SWEEP_HEADER, b)


# -- decision accuracy -------------------------------------------------------------

def test_accuracy_identical_and_disjoint():
    a = stats_with([0, 1], [0] * 6, [1] * 6)
    b = stats_with([2, 3], [1] * 6, [2] * 6)
    assert decision_accuracy(a, a) == 1.0
    assert decision_accuracy(a, b) == 0.0


def test_accuracy_half_of_seventy():
    freq = [0] * 10
    power = [0] * 30
    mod = [0] * 30
    ref = stats_with(freq, power, mod)
    # change every power decision and 5 frequency decisions: 35 of 70 still match
    other = stats_with([1] * 5 + [0] * 5, [1] * 30, mod)
    assert len(ref.trace) == 70
    assert decision_accuracy(other, ref) == 0.5
    assert decision_accuracy(ref, other) == 0.5


def test_accuracy_ignores_throughput_and_checks_length():
    a = stats_with([0], [1, 2, 3], [0, 0, 0])
    b = stats_with([0], [1, 2, 3], [0, 0, 0])
    b.cumulative_throughput_bits = 1e9
    assert decision_accuracy(a, b) == 1.0
    with pytest.raises(ValueError):
        decision_accuracy(a, stats_with([0, 0], [1] * 6, [0] * 6))


# -- ablation -------------------------------------------------------------------------

def test_ablation_rows_and_traces():
    cfg = CFG.with_training(batch_size=16)
    rows = ablation_suite(cfg, [0], episodes=2)
    assert [r[0] for r in rows] == ["full", "single_timescale", "fixed_max_power", "no_reward_shaping"]
    assert to_csv(ABLATION_HEADER, rows).splitlines()[0] == ",".join(ABLATION_HEADER)

    from antijam.agents.trainer import VARIANTS
    st_bundle = train("MT", cfg, 0, episodes=2, variant=VARIANTS["single_timescale"])[0]
    st = run_episode(st_bundle, cfg, 10.0, 0)
    l = cfg.timescale.l
    for i in range(cfg.timescale.k):
        assert len(set(st.power_actions[i * l:(i + 1) * l])) == 1
        assert len(set(st.mod_actions[i * l:(i + 1) * l])) == 1

    fp = train("MT", cfg, 0, episodes=2, variant=VARIANTS["fixed_max_power"])[0]
    st = run_episode(fp, cfg, 10.0, 0)
    top = len(cfg.radio.power_levels_dbm) - 1
    assert set(st.power_actions) == {top}
    assert cfg.radio.power_levels_dbm[top] == 50


def test_ablation_needs_seed():
    with pytest.raises(ValueError):
        ablation_suite(CFG, [])


# -- Q-interval dump ----------------------------------------------------------------------

def test_qdump_counts_and_degenerate_intervals(mt_bundle):
    rows = q_interval_dump(mt_bundle, CFG, 0.0)
    k, l, n = CFG.timescale.k, CFG.timescale.l, CFG.radio.n_channels
    n_p, n_v = len(CFG.radio.power_levels_dbm), 4
    assert len(rows) == k * n + k * l * (n_p + n_v)
    for role, slot, a, q, lo, hi in rows:
        assert lo == pytest.approx(q, abs=1e-12) and hi == pytest.approx(q, abs=1e-12)


def test_qdump_intervals_contain_point(mt_bundle):
    rows = q_interval_dump(mt_bundle, CFG, 10.0, slots={0})
    assert rows and {r[1] for r in rows} == {0}
    for role, slot, a, q, lo, hi in rows:
        assert lo <= q + 1e-12 and q <= hi + 1e-12


# -- contraction probe -----------------------------------------------------------------------

def test_probe_gamma_zero_is_constant():
    mdp = toy_mdp()
    rep = contraction_probe(mdp, 0.0, n_pairs=200)
    assert rep.max_ratio == 0.0
    assert rep.iterations <= 2
    assert np.array_equal(worst_case_backup(mdp, np.zeros(4), 0.0), worst_case_backup(mdp, np.ones(4) * 9, 0.0))


def test_probe_ratio_bounded_by_gamma():
    mdp = toy_mdp()
    assert mdp.rewards.shape == (4, 2) and mdp.observations.shape == (4, 3)
    rep = contraction_probe(mdp, 0.3, n_pairs=1000)
    assert rep.max_ratio <= 0.3 + 1e-9
    assert rep.fixed_point_spread <= 1e-8


def test_backup_matches_enumeration():
    # brute force the min over perturbed observations for one value vector
    mdp = toy_mdp()
    v = np.array([1.0, -2.0, 0.5, 3.0])
    got = worst_case_backup(mdp, v, 0.3)
    for s in range(4):
        cands = []
        for o in mdp.observations[s]:
            total = 0.0
            for a in range(2):
                total += mdp.policy[o, a] * (mdp.rewards[s, a] + 0.3 * sum(
                    mdp.transitions[s, a, s2] * v[s2] for s2 in range(4)))
            cands.append(total)
        assert got[s] == pytest.approx(min(cands), rel=1e-12)


def test_random_baseline_reproducible():
    a = run_episode(RandomPolicy(CFG, stream(0, "policy", 0)), CFG, 0.0, 0)
    b = run_episode(RandomPolicy(CFG, stream(0, "policy", 0)), CFG, 0.0, 0)
    assert a.trace == b.trace

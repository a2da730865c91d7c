"""Loss assembly for the three learners.

Every loss takes a minibatch ``(s, a, r, s2, terminal)`` of true states
and returns ``(loss, GradientBundle)`` for the current network.  Batch
functions are vectorized; the single-sample helpers
(``misleading_set``, ``qsr_loss``, ...) are thin wrappers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..neural import QNetwork, compress_interval, compress_interval_backward


def epsilon_greedy(q, explore_p: float, rng: np.random.Generator) -> int:
    """Random action with probability ``explore_p``, else the lowest-index argmax.

    Always consumes exactly one uniform draw, plus one integer draw when
    exploring, so runs that share a seed stay aligned.
    """
    q = np.asarray(q, dtype=float)
    if q.size == 0:
        raise ValueError("empty action-value vector")
    if not 0 <= explore_p <= 1:
        raise ValueError("explore_p must be in [0, 1]")
    if rng.random() < explore_p:
        return int(rng.integers(q.size))
    return int(np.argmax(q))


def ddqn_target(r, s2, terminal, cur: QNetwork, tgt: QNetwork, gamma: float):
    """Double-DQN bootstrap: the current net picks, the target net values."""
    r = np.asarray(r, dtype=float)
    s2 = np.atleast_2d(np.asarray(s2, dtype=float))
    terminal = np.asarray(terminal, dtype=bool)
    pick = np.argmax(cur.forward(s2), axis=1)
    boot = tgt.forward(s2)[np.arange(s2.shape[0]), pick]
    y = np.where(terminal, r, r + gamma * boot)
    return y if y.ndim else float(y)


def td_loss(batch, cur: QNetwork, tgt: QNetwork, gamma: float):
    """Mean squared TD error; the gradient flows only through Q_cur(s, a)."""
    s, a, r, s2, term = batch
    n = s.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    y = ddqn_target(r, s2, term, cur, tgt, gamma)
    q, cache = cur.forward_cache(s)
    rows = np.arange(n)
    resid = y - q[rows, a]
    loss = float(np.mean(resid ** 2))
    up = np.zeros_like(q)
    up[rows, a] = -2.0 * resid / n
    return loss, cur.backward(cache, up)


def _runner_up(q: np.ndarray, a_star: np.ndarray):
    masked = q.copy()
    rows = np.arange(q.shape[0])
    masked[rows, a_star] = -np.inf
    other = np.argmax(masked, axis=1)
    margin = q[rows, other] - q[rows, a_star]
    return other, margin


def attack_margin(net: QNetwork, x, a_star):
    """``max_{a != a*} Q(x, a) - Q(x, a*)`` per row."""
    x = np.atleast_2d(x)
    _, margin = _runner_up(net.forward(x), np.asarray(a_star).reshape(-1))
    return margin


@dataclass(frozen=True)
class AttackSpec:
    steps: int = 20
    step_frac: float = 0.05
    radius: float = 0.0  # per perturbed coordinate, normalized units
    ball: str = "box"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if not 0 < self.step_frac <= 1:
            raise ValueError("step_frac must be in (0, 1]")
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        if self.ball not in ("box", "l2"):
            raise ValueError("ball must be 'box' or 'l2'")


def _project(x, s, radius, mask, ball):
    if ball == "box":
        lo = s - radius * mask
        hi = s + radius * mask
        return np.clip(x, lo, hi)
    d = (x - s) * mask
    norm = np.linalg.norm(d, axis=1, keepdims=True)
    scale = np.where(norm > radius, radius / np.maximum(norm, 1e-300), 1.0)
    return s + d * scale


def _init_in_ball(s, radius, mask, ball, rng):
    n, dim = s.shape
    if ball == "box":
        u = rng.uniform(-1.0, 1.0, size=(n, dim))
        return s + radius * u * mask
    k = int(mask.sum())
    g = rng.standard_normal((n, dim)) * mask
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    rad = rng.uniform(size=(n, 1)) ** (1.0 / max(k, 1))
    return s + g / np.maximum(norm, 1e-300) * rad * radius


def pgd_attack(net: QNetwork, true_state, spec: AttackSpec, rng: np.random.Generator,
               mask=None, return_margin: bool = False):
    """Strongest in-ball observation by projected sign-gradient ascent.

    Maximizes the runner-up margin against the true-state greedy action.
    Starts from a uniform draw in the ball and returns the best iterate
    seen (initial point included).  ``mask`` marks which coordinates are
    sensed and may move.  Parameters are never touched.
    """
    s = np.asarray(true_state, dtype=float)
    single = s.ndim == 1
    s = np.atleast_2d(s)
    mask = np.ones(s.shape[1]) if mask is None else np.asarray(mask, dtype=float)
    a_star = np.argmax(net.forward(s), axis=1)
    if spec.radius == 0:
        out = s.copy()
        if return_margin:
            m = attack_margin(net, out, a_star)
            return (out[0], m[0]) if single else (out, m)
        return out[0] if single else out
    x = _project(_init_in_ball(s, spec.radius, mask, spec.ball, rng), s, spec.radius, mask, spec.ball)
    step = spec.step_frac * spec.radius
    best_x = x.copy()
    best_m = np.full(s.shape[0], -np.inf)
    rows = np.arange(s.shape[0])
    for it in range(spec.steps + 1):
        q, cache = net.forward_cache(x)
        other, margin = _runner_up(q, a_star)
        better = margin > best_m
        best_m = np.where(better, margin, best_m)
        best_x[better] = x[better]
        if it == spec.steps:
            break
        up = np.zeros_like(q)
        up[rows, other] = 1.0
        up[rows, a_star] -= 1.0
        dx = net.input_gradient(cache, up)
        x = _project(x + step * np.sign(dx) * mask, s, spec.radius, mask, spec.ball)
    if return_margin:
        return (best_x[0], best_m[0]) if single else (best_x, best_m)
    return best_x[0] if single else best_x


def pgd_regularizer(net: QNetwork, worst_state, a_star, delta: float):
    """Hinge ``max(max_{a != a*} Q(x*, a) - Q(x*, a*), delta)`` per row, with its gradient.

    Returns ``(values, GradientBundle of the batch mean)``.
    """
    if not delta < 0:
        raise ValueError("delta must be negative")
    x = np.atleast_2d(np.asarray(worst_state, dtype=float))
    a_star = np.asarray(a_star).reshape(-1)
    q, cache = net.forward_cache(x)
    other, margin = _runner_up(q, a_star)
    vals = np.maximum(margin, delta)
    n = x.shape[0]
    rows = np.arange(n)
    active = (margin > delta).astype(float) / n
    up = np.zeros_like(q)
    up[rows, other] += active
    up[rows, a_star] -= active
    return vals, net.backward(cache, up)


def combined_loss_pgd(batch, cur: QNetwork, tgt: QNetwork, gamma: float, omega: float,
                      spec: AttackSpec, delta: float, rng: np.random.Generator, mask=None):
    """``omega * L_true + (1 - omega) * mean_batch(L_*)``."""
    if not 0 <= omega <= 1:
        raise ValueError("omega must be in [0, 1]")
    l_true, g_true = td_loss(batch, cur, tgt, gamma)
    s = batch[0]
    a_star = np.argmax(cur.forward(s), axis=1)
    worst = pgd_attack(cur, s, spec, rng, mask=mask)
    vals, g_reg = pgd_regularizer(cur, worst, a_star, delta)
    l_star = float(np.mean(vals))
    loss = omega * l_true + (1.0 - omega) * l_star
    grads = g_true.scaled(omega) + g_reg.scaled(1.0 - omega)
    grads.dx = None
    return loss, grads, {"td": l_true, "reg": l_star}


def misleading_set(q_low, q_high, a_star: int) -> list[int]:
    """Actions whose upper bound strictly exceeds the optimal action's lower bound."""
    q_low = np.asarray(q_low, dtype=float)
    q_high = np.asarray(q_high, dtype=float)
    floor = q_low[a_star]
    return [a for a in range(q_high.shape[0]) if a != a_star and q_high[a] > floor]


def qsr_loss(q_low, q_high, a_star: int) -> float:
    q_low = np.asarray(q_low, dtype=float)
    q_high = np.asarray(q_high, dtype=float)
    return float(sum(max(q_high[a] - q_low[a_star], 0.0) for a in misleading_set(q_low, q_high, a_star)))


def _qsr_batch(c_low, c_high, a_star):
    n, m = c_low.shape
    rows = np.arange(n)
    floor = c_low[rows, a_star][:, None]
    viol = c_high > floor
    viol[rows, a_star] = False
    per = np.where(viol, c_high - floor, 0.0).sum(axis=1)
    return per, viol


def nqc_bounds(net: QNetwork, s, radius_vec, coeff: float, floor=None):
    """Raw and compressed IBP bounds on the box ``s +- radius_vec``."""
    s = np.atleast_2d(s)
    low = s - radius_vec
    if floor is not None:
        low = np.maximum(low, np.minimum(floor, s))
    lo, hi, cache = net.ibp_forward(low, s + radius_vec)
    c_lo, c_hi = compress_interval(lo, hi, coeff)
    return lo, hi, c_lo, c_hi, cache


def combined_loss_nqc(batch, cur: QNetwork, tgt: QNetwork, gamma: float, omega: float,
                      radius_vec, coeff: float, floor=None):
    """``omega * L_true + (1 - omega) * mean_batch(QSR)`` on compressed IBP bounds."""
    if not 0 <= omega <= 1:
        raise ValueError("omega must be in [0, 1]")
    l_true, g_true = td_loss(batch, cur, tgt, gamma)
    s = batch[0]
    n = s.shape[0]
    a_star = np.argmax(cur.forward(s), axis=1)
    lo, hi, c_lo, c_hi, cache = nqc_bounds(cur, s, radius_vec, coeff, floor)
    per, viol = _qsr_batch(c_lo, c_hi, a_star)
    l_qsr = float(np.mean(per))
    rows = np.arange(n)
    g_chi = viol.astype(float) / n
    g_clo = np.zeros_like(c_lo)
    g_clo[rows, a_star] = -viol.sum(axis=1) / n
    d_lo, d_hi = compress_interval_backward(lo, hi, coeff, g_clo, g_chi)
    g_qsr = cur.ibp_backward(cache, d_lo, d_hi)
    loss = omega * l_true + (1.0 - omega) * l_qsr
    grads = g_true.scaled(omega) + g_qsr.scaled(1.0 - omega)
    grads.dx = None
    return loss, grads, {"td": l_true, "qsr": l_qsr}

"""Fixed-capacity FIFO replay storage with uniform minibatch sampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    next_state: np.ndarray
    reward: float
    terminal: bool


class ReplayBuffer:
    def __init__(self, capacity: int, state_dim: int, n_actions: int | None = None):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.state_dim = state_dim
        self.n_actions = n_actions
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminals = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0
        self.pushed = 0

    def __len__(self) -> int:
        return self._size

    def push(self, state, action: int, next_state, reward: float, terminal: bool) -> None:
        if self.n_actions is not None and not 0 <= action < self.n_actions:
            raise ValueError(f"action {action} outside [0, {self.n_actions})")
        state = np.asarray(state, dtype=float)
        next_state = np.asarray(next_state, dtype=float)
        if not (np.all(np.isfinite(state)) and np.all(np.isfinite(next_state))):
            raise ValueError("non-finite state in transition")
        i = self._next
        self.states[i] = state
        self.next_states[i] = next_state
        self.actions[i] = action
        self.rewards[i] = reward
        self.terminals[i] = terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.pushed += 1

    def add(self, t: Transition) -> None:
        self.push(t.state, t.action, t.next_state, t.reward, t.terminal)

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform sample without replacement, as ``(s, a, r, s2, terminal)`` arrays."""
        if batch_size > self._size:
            raise ValueError(f"cannot draw {batch_size} from {self._size} stored transitions")
        idx = rng.choice(self._size, size=batch_size, replace=False)
        return (self.states[idx], self.actions[idx], self.rewards[idx],
                self.next_states[idx], self.terminals[idx])

    def transitions(self) -> list[Transition]:
        """Stored records, oldest first."""
        if self._size < self.capacity:
            order = range(self._size)
        else:
            order = [(self._next + j) % self.capacity for j in range(self.capacity)]
        return [Transition(self.states[i].copy(), int(self.actions[i]), self.next_states[i].copy(),
                           float(self.rewards[i]), bool(self.terminals[i])) for i in order]

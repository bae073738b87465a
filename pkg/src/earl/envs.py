"""Grid worlds used in the experiments and the random tabular MDP corpus.

Both grid worlds are 10x10 with four moves (up, down, left, right); a move
off the grid leaves the agent in place and there is no living penalty.

* ``Diagonal``: start top-left; 4.5 at the top-right corner, 5.0 at the
  bottom-left corner; reaching either ends the episode. Episodes are
  truncated after ``max_steps`` moves.
* ``TwoColors``: start bottom-left; a fixed 0.5 cell at the top-right sends
  the agent back to the start; a 1.0 goal jumps to a fresh random cell each
  time it is captured. The task never terminates and is cut into
  ``episode_length`` step episodes for reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mdp import TabularMDP
from .validation import check_discount, check_random_state

UP, DOWN, LEFT, RIGHT = range(4)
ACTION_NAMES = ("up", "down", "left", "right")
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)

    @property
    def truncated(self) -> bool:
        return bool(self.info.get("truncated", False))

    @property
    def terminated(self) -> bool:
        return self.done and not self.truncated


class GridWorld:
    """Common movement, encoding and bookkeeping for the two grid worlds."""

    n_actions = 4
    kind = "grid"

    def __init__(self, seed=None, height=10, width=10, encoding="onehot"):
        if encoding not in ("onehot", "index"):
            raise ValueError(f"unknown encoding {encoding!r}")
        self.height = height
        self.width = width
        self.n_cells = height * width
        self.encoding = encoding
        self.seed = seed
        self.rng = check_random_state(seed)
        self.agent = (0, 0)
        self.t = 0
        self.episode_return = 0.0

    def cell_index(self, pos) -> int:
        return pos[0] * self.width + pos[1]

    def cell_pos(self, index):
        return divmod(int(index), self.width)

    def move(self, pos, action):
        if action not in (0, 1, 2, 3):
            raise ValueError(f"invalid action {action!r}; expected 0..3")
        dr, dc = MOVES[action]
        return (min(max(pos[0] + dr, 0), self.height - 1), min(max(pos[1] + dc, 0), self.width - 1))

    def observe(self, encoding=None):
        """Current observation as a one-hot feature vector or an integer state id."""
        encoding = encoding or self.encoding
        sid = self.state_id()
        if encoding == "index":
            return sid
        return self.features(np.array([sid]))[0]

    def render(self) -> str:
        grid = [["." for _ in range(self.width)] for _ in range(self.height)]
        for pos, ch in self._markers():
            grid[pos[0]][pos[1]] = ch
        grid[self.agent[0]][self.agent[1]] = "A"
        return "\n".join("".join(row) for row in grid)


class Diagonal(GridWorld):
    kind = "diagonal"

    def __init__(self, seed=None, height=10, width=10, max_steps=100, encoding="onehot",
                 suboptimum_reward=4.5, optimum_reward=5.0):
        super().__init__(seed, height, width, encoding)
        self.max_steps = max_steps
        self.start = (0, 0)
        self.suboptimum = (0, width - 1)
        self.optimum = (height - 1, 0)
        self.rewards = {self.suboptimum: float(suboptimum_reward), self.optimum: float(optimum_reward)}
        self.n_states = self.n_cells
        self.feature_dim = self.n_cells
        self.reset()

    def reset(self):
        self.agent = self.start
        self.t = 0
        self.episode_return = 0.0
        return self.observe()

    def state_id(self) -> int:
        return self.cell_index(self.agent)

    def decode(self, sid):
        return {"agent": self.cell_pos(sid)}

    def features(self, ids):
        ids = np.asarray(ids, dtype=int)
        out = np.zeros((ids.size, self.n_cells))
        out[np.arange(ids.size), ids] = 1.0
        return out

    def step(self, action) -> StepResult:
        self.agent = self.move(self.agent, action)
        self.t += 1
        reward = self.rewards.get(self.agent, 0.0)
        info = {}
        done = False
        if reward:
            done = True
            info["captured"] = "optimum" if self.agent == self.optimum else "suboptimum"
        elif self.t >= self.max_steps:
            done = True
            info["truncated"] = True
        self.episode_return += reward
        return StepResult(self.observe(), reward, done, info)

    def _markers(self):
        return [(self.suboptimum, "s"), (self.optimum, "G")]


class TwoColors(GridWorld):
    kind = "twocolors"

    def __init__(self, seed=None, height=10, width=10, episode_length=500, encoding="onehot",
                 suboptimum_reward=0.5, optimum_reward=1.0):
        super().__init__(seed, height, width, encoding)
        self.episode_length = episode_length
        self.start = (height - 1, 0)
        self.suboptimum = (0, width - 1)
        self.suboptimum_reward = float(suboptimum_reward)
        self.optimum_reward = float(optimum_reward)
        self.n_states = self.n_cells * self.n_cells
        self.feature_dim = 2 * self.n_cells
        self.goal = None
        self.reset()

    def eligible_goal_cells(self):
        """Cells a relocated goal may occupy: not the agent, the suboptimum or the start."""
        blocked = {self.cell_index(self.agent), self.cell_index(self.suboptimum), self.cell_index(self.start)}
        return np.array([i for i in range(self.n_cells) if i not in blocked])

    def _relocate_goal(self):
        self.goal = self.cell_pos(self.rng.choice(self.eligible_goal_cells()))

    def reset(self):
        self.agent = self.start
        self.t = 0
        self.episode_return = 0.0
        self._relocate_goal()
        return self.observe()

    def state_id(self) -> int:
        return self.cell_index(self.agent) * self.n_cells + self.cell_index(self.goal)

    def decode(self, sid):
        agent, goal = divmod(int(sid), self.n_cells)
        return {"agent": self.cell_pos(agent), "goal": self.cell_pos(goal)}

    def features(self, ids):
        ids = np.asarray(ids, dtype=int)
        out = np.zeros((ids.size, 2 * self.n_cells))
        rows = np.arange(ids.size)
        out[rows, ids // self.n_cells] = 1.0
        out[rows, self.n_cells + ids % self.n_cells] = 1.0
        return out

    def step(self, action) -> StepResult:
        self.agent = self.move(self.agent, action)
        self.t += 1
        reward = 0.0
        info = {}
        if self.agent == self.suboptimum:
            reward = self.suboptimum_reward
            info["captured"] = "suboptimum"
            self.agent = self.start
        elif self.agent == self.goal:
            reward = self.optimum_reward
            info["captured"] = "optimum"
            self._relocate_goal()
        done = self.t >= self.episode_length
        if done:
            info["truncated"] = True
        self.episode_return += reward
        return StepResult(self.observe(), reward, done, info)

    def _markers(self):
        return [(self.suboptimum, "s"), (self.goal, "G")]


ENVIRONMENTS = {"diagonal": Diagonal, "twocolors": TwoColors}


def make_env(kind, seed=None, **params):
    try:
        cls = ENVIRONMENTS[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown environment {kind!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(seed=seed, **params)


def diagonal_env(seed=None, **params) -> Diagonal:
    return Diagonal(seed=seed, **params)


def twocolors_env(seed=None, **params) -> TwoColors:
    return TwoColors(seed=seed, **params)


def step(env, action) -> StepResult:
    return env.step(action)


def observe(env, encoding=None):
    return env.observe(encoding)


def to_tabular(env_or_kind="diagonal", gamma=0.99) -> TabularMDP:
    """Exact tabular model of the Diagonal grid world.

    States are the cells plus one absorbing terminal state (the last index).
    Entering a rewarded cell pays its reward and moves to the terminal state.
    The step limit is not modelled.
    """
    env = make_env(env_or_kind) if isinstance(env_or_kind, str) else env_or_kind
    if not isinstance(env, Diagonal):
        raise ValueError("to_tabular supports the Diagonal environment only")
    gamma = check_discount(gamma)
    n = env.n_cells
    terminal = n
    P = np.zeros((n + 1, 4, n + 1))
    R = np.zeros((n + 1, 4))
    for s in range(n):
        pos = env.cell_pos(s)
        for a in range(4):
            if pos in env.rewards:
                P[s, a, terminal] = 1.0
                continue
            nxt = env.move(pos, a)
            if nxt in env.rewards:
                R[s, a] = env.rewards[nxt]
                P[s, a, terminal] = 1.0
            else:
                P[s, a, env.cell_index(nxt)] = 1.0
    P[terminal, :, terminal] = 1.0
    rho0 = np.zeros(n + 1)
    rho0[env.cell_index(env.start)] = 1.0
    return TabularMDP(P, R, gamma, rho0, name="diagonal")


def random_mdp(seed, n_states, n_actions, gamma) -> TabularMDP:
    """Random MDP: flat-Dirichlet transitions, rewards uniform in [-1, 1], Dirichlet rho0."""
    if n_states < 1 or n_actions < 1:
        raise ValueError("need at least one state and one action")
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    R = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    rho0 = rng.dirichlet(np.ones(n_states))
    return TabularMDP(P, R, gamma, rho0, reward_bound=1.0, name=f"random-{seed}")


def format_transition(t, s, a, r, s_next, done) -> str:
    """One line of the trajectory dump: ``t s a r s' done``."""
    return f"{t} {s} {a} {r:.10g} {s_next} {int(bool(done))}"


def dump_trajectory(path, rows):
    with open(path, "w") as fh:
        fh.write("# t s a r s_next done\n")
        for row in rows:
            fh.write(format_transition(*row) + "\n")

"""A*-guided deep Q-learning on the warehouse grid, at desk scale.

Epsilon-greedy Q-learning with uniform replay memory and a periodically
synchronized target network; with probability xi the action instead follows
the current A* plan. The value approximator is a single-hidden-layer
feed-forward network over a flattened state encoding (positions, occupancy
planes, goal offsets, task attributes, other vehicles).

State layout (all features in [-1, 1]): normalized position; last move
direction; obstacle plane then remaining-goal plane (row-major, index
y*width + x); five goal slots as relative offsets with the current target
always in slot 0 and the final goal padding unused slots; task attributes
(priority, deadline, cost, visited-subgoal bitmask / 15); relative position
and direction of each other vehicle. Actions: up, down, left, right, stay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costmodel import CostParams, leg_energy
from .layout import Cell, GridMap
from .routing import astar, order_stops

ACTIONS: tuple[tuple[int, int], ...] = ((0, 1), (0, -1), (-1, 0), (1, 0), (0, 0))
ACTION_NAMES = ("up", "down", "left", "right", "stay")
N_ACTIONS = len(ACTIONS)
MAX_SUBGOALS = 4


class DivergenceError(RuntimeError):
    """Training loss exceeded the divergence guard."""


# -- state encoding --------------------------------------------------------


@dataclass(frozen=True)
class StateVector:
    position: Cell
    velocity: tuple[int, int]
    width: int
    height: int
    obstacle_mask: np.ndarray
    shelf_mask: np.ndarray
    goals: tuple[Cell, ...]                     # 5 slots, current target first
    task: tuple[float, float, float, float]     # priority, deadline, cost, visited/15
    others: tuple[float, ...]

    def vector(self) -> np.ndarray:
        x, y = self.position
        gx = np.array([(g[0] - x) / self.width for g in self.goals])
        gy = np.array([(g[1] - y) / self.height for g in self.goals])
        goal_feats = np.stack([gx, gy], axis=1).ravel()
        return np.concatenate([
            np.array([x / self.width, y / self.height,
                      self.velocity[0], self.velocity[1]], dtype=np.float64),
            self.obstacle_mask, self.shelf_mask, goal_feats,
            np.array(self.task, dtype=np.float64),
            np.array(self.others, dtype=np.float64),
        ])

    def valid_actions(self) -> list[int]:
        out = []
        x, y = self.position
        for i, (dx, dy) in enumerate(ACTIONS):
            nx, ny = x + dx, y + dy
            if not (0 <= nx < self.width and 0 <= ny < self.height):
                continue
            if self.obstacle_mask[ny * self.width + nx] > 0:
                continue
            out.append(i)
        return out


def state_dim(grid: GridMap, n_agvs: int) -> int:
    return 4 + 2 * grid.width * grid.height + 2 * (MAX_SUBGOALS + 1) + 4 \
        + 4 * max(0, n_agvs - 1)


# -- network and replay ----------------------------------------------------


def q_forward(params: list[np.ndarray], x: np.ndarray) -> np.ndarray:
    """Batch Q-values for inputs shaped (B, D) or (D,)."""
    w1, b1, w2, b2 = params
    single = x.ndim == 1
    if single:
        x = x[None, :]
    hidden = np.maximum(x @ w1 + b1, 0.0)
    q = hidden @ w2 + b2
    return q[0] if single else q


def q_loss_and_grads(params: list[np.ndarray], x: np.ndarray, actions: np.ndarray,
                     targets: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Mean squared TD error over a batch and its parameter gradients."""
    w1, b1, w2, b2 = params
    batch = x.shape[0]
    pre = x @ w1 + b1
    hidden = np.maximum(pre, 0.0)
    q = hidden @ w2 + b2
    idx = np.arange(batch)
    err = q[idx, actions] - targets
    loss = float(np.mean(err ** 2))
    dq = np.zeros_like(q)
    dq[idx, actions] = 2.0 * err / batch
    dw2 = hidden.T @ dq
    db2 = dq.sum(axis=0)
    dh = dq @ w2.T
    dh[pre <= 0.0] = 0.0
    dw1 = x.T @ dh
    db1 = dh.sum(axis=0)
    return loss, [dw1, db1, dw2, db2]


class QFunction:
    """Online network plus target copy; target syncs only on sync_target()."""

    FORMAT_VERSION = 1

    def __init__(self, input_dim: int, hidden: int = 64, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.input_dim = input_dim
        self.hidden = hidden
        self.params = [
            rng.normal(0.0, np.sqrt(2.0 / input_dim), (input_dim, hidden)),
            np.zeros(hidden),
            rng.normal(0.0, np.sqrt(2.0 / hidden), (hidden, N_ACTIONS)),
            np.zeros(N_ACTIONS),
        ]
        self.target_params = [p.copy() for p in self.params]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return q_forward(self.params, x)

    def predict_target(self, x: np.ndarray) -> np.ndarray:
        return q_forward(self.target_params, x)

    def greedy_action(self, x: np.ndarray) -> int:
        return int(np.argmax(self.predict(x)))   # first max: lexicographic tie-break

    def sgd_step(self, x: np.ndarray, actions: np.ndarray, targets: np.ndarray,
                 lr: float) -> float:
        loss, grads = q_loss_and_grads(self.params, x, actions, targets)
        for p, g in zip(self.params, grads):
            p -= lr * g
        return loss

    def sync_target(self) -> None:
        self.target_params = [p.copy() for p in self.params]

    def save(self, path) -> None:
        flat = np.concatenate([p.ravel() for p in self.params])
        np.savez(path, version=self.FORMAT_VERSION,
                 dims=np.array([self.input_dim, self.hidden, N_ACTIONS]),
                 params=flat)

    @classmethod
    def load(cls, path) -> "QFunction":
        data = np.load(path)
        if int(data["version"]) != cls.FORMAT_VERSION:
            raise ValueError(f"unsupported parameter file version {data['version']}")
        input_dim, hidden, n_actions = (int(v) for v in data["dims"])
        if n_actions != N_ACTIONS:
            raise ValueError("action-space mismatch")
        q = cls(input_dim, hidden)
        flat = data["params"]
        offset = 0
        for i, p in enumerate(q.params):
            q.params[i] = flat[offset:offset + p.size].reshape(p.shape).copy()
            offset += p.size
        q.target_params = [p.copy() for p in q.params]
        return q


def td_target(reward: float, next_state: np.ndarray, done: bool, gamma: float,
              q: QFunction) -> float:
    """Target value: the reward alone on terminal transitions, otherwise the
    reward plus the discounted best target-network value of the successor."""
    if done:
        return reward
    return reward + gamma * float(np.max(q.predict_target(next_state)))


class ReplayBuffer:
    """Fixed-capacity ring with FIFO eviction and uniform batch sampling."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._data: list[tuple] = []
        self._write = 0

    def push(self, item: tuple) -> None:
        if len(self._data) < self.capacity:
            self._data.append(item)
        else:
            self._data[self._write] = item
        self._write = (self._write + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[tuple]:
        idx = rng.choice(len(self._data), size=batch_size, replace=False)
        return [self._data[i] for i in idx]

    def __len__(self) -> int:
        return len(self._data)


# -- environment -----------------------------------------------------------


@dataclass
class AgentTask:
    """Up to four sub-goals then the final goal (the picking station)."""

    subgoals: tuple[Cell, ...]
    final: Cell
    priority: float = 0.0        # class rank scaled to [0, 1]
    deadline: float = 0.0        # remaining window scaled to [0, 1]
    cost: float = 0.0            # accrued delay cost over cap
    visited: int = 0             # bitmask over subgoals
    completed: bool = False

    def remaining(self) -> list[Cell]:
        return [g for i, g in enumerate(self.subgoals) if not self.visited >> i & 1]

    def current_target(self) -> Cell:
        rest = self.remaining()
        return rest[0] if rest else self.final


class GridEnv:
    """Multi-vehicle grid world driving trips of sub-goals to the station.

    Movement follows the same serial-priority rules as the simulator: lower
    index wins, swaps are forbidden, and the station is a shared depot.
    Rewards: -0.01 per tick, +1 per sub-goal, +5 for finishing at the final
    goal, -1 for a blocked move, minus the move's energy in Wh scaled by
    0.001.
    """

    STEP_REWARD = -0.01
    SUBGOAL_REWARD = 1.0
    FINAL_REWARD = 5.0
    BLOCKED_REWARD = -1.0
    ENERGY_SCALE = 0.001

    def __init__(self, grid: GridMap, n_agvs: int = 1,
                 cost: CostParams | None = None):
        self.grid = grid
        self.n_agvs = n_agvs
        self.cost = cost or CostParams()
        self._obstacle_mask = np.zeros(grid.width * grid.height)
        for (ox, oy) in grid.obstacles:
            self._obstacle_mask[oy * grid.width + ox] = 1.0
        self.positions: list[Cell] = []
        self.velocities: list[tuple[int, int]] = []
        self.tasks: list[AgentTask] = []
        self.move_energy = leg_energy(self.cost.self_weight, grid.cell_size, self.cost)

    def reset(self, tasks: list[AgentTask], starts: list[Cell]) -> None:
        assert len(tasks) == len(starts) == self.n_agvs
        self.tasks = tasks
        self.positions = list(starts)
        self.velocities = [(0, 0)] * self.n_agvs

    def assign(self, agent: int, task: AgentTask) -> None:
        self.tasks[agent] = task

    def done(self) -> bool:
        return all(t.completed for t in self.tasks)

    def encode(self, agent: int) -> StateVector:
        task = self.tasks[agent]
        shelf = np.zeros_like(self._obstacle_mask)
        for t in self.tasks:
            for (sx, sy) in t.remaining():
                shelf[sy * self.grid.width + sx] = 1.0
        rest = task.remaining()
        goals = (*rest, *[task.final] * (MAX_SUBGOALS + 1 - len(rest)))
        others: list[float] = []
        x, y = self.positions[agent]
        for j in range(self.n_agvs):
            if j == agent:
                continue
            ox, oy = self.positions[j]
            others.extend([(ox - x) / self.grid.width, (oy - y) / self.grid.height,
                           self.velocities[j][0], self.velocities[j][1]])
        return StateVector(
            position=self.positions[agent], velocity=self.velocities[agent],
            width=self.grid.width, height=self.grid.height,
            obstacle_mask=self._obstacle_mask, shelf_mask=shelf,
            goals=goals, task=(task.priority, task.deadline, task.cost,
                               task.visited / 15.0),
            others=tuple(others))

    def astar_hint(self, agent: int) -> Cell | None:
        """Next cell along the shortest path to the agent's current target."""
        task = self.tasks[agent]
        if task.completed:
            return None
        path = astar(self.grid, self.positions[agent], task.current_target())
        return path.cells[1] if len(path.cells) > 1 else path.cells[0]

    def step(self, actions: list[int]) -> tuple[list[float], list[bool]]:
        rewards = [0.0] * self.n_agvs
        station = self.grid.station
        old = list(self.positions)
        committed: dict[int, Cell] = {}
        for i in range(self.n_agvs):
            task = self.tasks[i]
            if task.completed:
                committed[i] = old[i]
                continue
            rewards[i] += self.STEP_REWARD
            dx, dy = ACTIONS[actions[i]]
            target = (old[i][0] + dx, old[i][1] + dy)
            if target == old[i]:
                committed[i] = old[i]
                continue
            blocked = not self.grid.passable(target)
            if not blocked and target != station:
                for j, cell in committed.items():
                    if cell == target:
                        blocked = True                      # already claimed
                        break
                else:
                    for j in range(i + 1, self.n_agvs):
                        if old[j] == target:
                            blocked = True                  # occupant not yet moved
                            break
            if not blocked:
                # forbid head-on swaps
                for j, cell in committed.items():
                    if cell == old[i] and old[j] == target:
                        blocked = True
                        break
            if blocked:
                rewards[i] += self.BLOCKED_REWARD
                committed[i] = old[i]
            else:
                committed[i] = target
                rewards[i] -= self.ENERGY_SCALE * self.move_energy

        dones = []
        for i in range(self.n_agvs):
            task = self.tasks[i]
            new_pos = committed[i]
            self.velocities[i] = (new_pos[0] - old[i][0], new_pos[1] - old[i][1])
            self.positions[i] = new_pos
            if not task.completed:
                for k, g in enumerate(task.subgoals):
                    if new_pos == g and not task.visited >> k & 1:
                        task.visited |= 1 << k
                        rewards[i] += self.SUBGOAL_REWARD
                if not task.remaining() and new_pos == task.final:
                    task.completed = True
                    rewards[i] += self.FINAL_REWARD
            dones.append(task.completed)
        return rewards, dones


def encode_state(env: GridEnv, agent: int) -> StateVector:
    """Deterministic flattening of one vehicle's view of the environment."""
    return env.encode(agent)


def select_action(state: StateVector, q: QFunction, epsilon: float, xi: float,
                  astar_hint: Cell | None, rng: np.random.Generator) -> int:
    """A*-guided epsilon-greedy action selection."""
    if astar_hint is not None and rng.random() < xi:
        dx = astar_hint[0] - state.position[0]
        dy = astar_hint[1] - state.position[1]
        return ACTIONS.index((dx, dy))
    if rng.random() < epsilon:
        valid = state.valid_actions()
        return valid[int(rng.integers(len(valid)))]
    return int(np.argmax(q.predict(state.vector())))


# -- training loop ----------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 500
    max_steps: int = 200
    gamma: float = 0.95
    epsilon: float = 1.0
    epsilon_min: float = 0.05
    epsilon_decay: float = 0.995
    xi: float = 0.3               # anneals linearly to zero over the run
    buffer_capacity: int = 10_000
    batch_size: int = 64
    target_sync: int = 200
    learning_rate: float = 5e-3
    hidden: int = 64
    seed: int = 0
    divergence_limit: float = 1e6


@dataclass(frozen=True)
class EpisodeStats:
    episode: int
    cumulative_reward: float
    mean_loss: float
    epsilon: float
    xi: float


@dataclass
class TrainResult:
    q: QFunction
    curves: list[EpisodeStats] = field(default_factory=list)

    def rewards(self) -> list[float]:
        return [c.cumulative_reward for c in self.curves]


def train(env: GridEnv, sampler, config: TrainConfig) -> TrainResult:
    """Run the full training loop and return the fitted network and curves.

    `sampler(rng, episode)` must yield (tasks, starts) for each episode.
    Raises DivergenceError when the batch loss passes the divergence guard.
    """
    rng = np.random.default_rng(config.seed)
    q = QFunction(state_dim(env.grid, env.n_agvs), hidden=config.hidden,
                  seed=config.seed)
    buffer = ReplayBuffer(config.buffer_capacity)
    epsilon = config.epsilon
    curves: list[EpisodeStats] = []
    learn_steps = 0

    for episode in range(config.episodes):
        xi = config.xi * max(0.0, 1.0 - episode / config.episodes)
        tasks, starts = sampler(rng, episode)
        env.reset(tasks, starts)
        ep_reward = 0.0
        losses: list[float] = []
        for _ in range(config.max_steps):
            pre: list[tuple[np.ndarray, int] | None] = []
            actions: list[int] = []
            for i in range(env.n_agvs):
                if env.tasks[i].completed:
                    pre.append(None)
                    actions.append(ACTIONS.index((0, 0)))
                    continue
                state = env.encode(i)
                action = select_action(state, q, epsilon, xi,
                                       env.astar_hint(i), rng)
                pre.append((state.vector(), action))
                actions.append(action)
            rewards, dones = env.step(actions)
            for i in range(env.n_agvs):
                if pre[i] is None:
                    continue
                vec, action = pre[i]
                buffer.push((vec, action, rewards[i], env.encode(i).vector(),
                             dones[i]))
                ep_reward += rewards[i]

            if len(buffer) >= config.batch_size:
                batch = buffer.sample(config.batch_size, rng)
                x = np.stack([b[0] for b in batch])
                acts = np.array([b[1] for b in batch])
                rew = np.array([b[2] for b in batch])
                nxt = np.stack([b[3] for b in batch])
                live = 1.0 - np.array([b[4] for b in batch], dtype=np.float64)
                targets = rew + config.gamma * q.predict_target(nxt).max(axis=1) * live
                loss = q.sgd_step(x, acts, targets, config.learning_rate)
                losses.append(loss)
                if loss > config.divergence_limit:
                    raise DivergenceError(
                        f"loss {loss:.3e} exceeded {config.divergence_limit:.0e} "
                        f"at episode {episode}")
                learn_steps += 1
                if learn_steps % config.target_sync == 0:
                    q.sync_target()
            if env.done():
                break
        epsilon = max(config.epsilon_min, epsilon * config.epsilon_decay)
        curves.append(EpisodeStats(
            episode=episode, cumulative_reward=ep_reward,
            mean_loss=_mean(losses), epsilon=epsilon, xi=xi))
    return TrainResult(q=q, curves=curves)


def _mean(values: list[float]) -> float:
    return sum(values) / len(values) if values else 0.0


def single_goal_sampler(grid: GridMap, seed: int = 0):
    """Episode sampler: random start, one random goal, no sub-goals."""
    cells = sorted(c for c in ((x, y) for x in range(grid.width)
                               for y in range(grid.height))
                   if grid.passable(c))

    def sampler(rng: np.random.Generator, episode: int):
        start = cells[int(rng.integers(len(cells)))]
        goal = cells[int(rng.integers(len(cells)))]
        while goal == start:
            goal = cells[int(rng.integers(len(cells)))]
        return [AgentTask(subgoals=(), final=goal)], [start]

    return sampler


# -- greedy evaluation -------------------------------------------------------


@dataclass
class EvalResult:
    completed: bool
    steps: int
    order_sequence: list[tuple[int, int, int]]     # (step, agent, order id)
    paths: list[list[Cell]]


def evaluate_policy(q: QFunction, grid: GridMap, orders, n_agvs: int = 2,
                    max_steps: int = 5000, nudge_after: int = 20) -> EvalResult:
    """Greedy rollout serving all orders in batches of up to four sub-goals.

    Deterministic: ties in the Q-values break lexicographically and a vehicle
    blocked `nudge_after` steps takes the first passable action toward any
    free cell, which resolves head-on standoffs without randomness.
    """
    env = GridEnv(grid, n_agvs=n_agvs)
    station = grid.station
    queue = list(orders)
    assigned: list[list] = [[] for _ in range(n_agvs)]

    def next_task(agent: int) -> AgentTask | None:
        if not queue:
            return None
        batch = queue[: min(4, len(queue))]
        del queue[: len(batch)]
        assigned[agent] = batch
        trip = order_stops(grid, [o.pickup for o in batch], station)
        return AgentTask(subgoals=trip.stops or (), final=station)

    tasks = []
    for i in range(n_agvs):
        task = next_task(i)
        tasks.append(task if task else AgentTask(subgoals=(), final=station,
                                                 completed=True))
    env.reset(tasks, [station] * n_agvs)

    sequence: list[tuple[int, int, int]] = []
    paths: list[list[Cell]] = [[station] for _ in range(n_agvs)]
    blocked_count = [0] * n_agvs
    cell_orders: list[dict[Cell, list]] = [{} for _ in range(n_agvs)]
    for i in range(n_agvs):
        for o in assigned[i]:
            cell_orders[i].setdefault(o.pickup, []).append(o)

    for step in range(1, max_steps + 1):
        actions = []
        for i in range(n_agvs):
            if env.tasks[i].completed:
                actions.append(ACTIONS.index((0, 0)))
                continue
            state = env.encode(i)
            if blocked_count[i] >= nudge_after:
                actions.append(_nudge_action(state, env, i))
                blocked_count[i] = 0
            else:
                actions.append(int(np.argmax(q.predict(state.vector()))))
        before = list(env.positions)
        visited_before = [t.visited for t in env.tasks]
        env.step(actions)
        for i in range(n_agvs):
            if env.positions[i] == before[i]:
                if not env.tasks[i].completed:
                    blocked_count[i] += 1
                continue
            blocked_count[i] = 0
            paths[i].append(env.positions[i])
            if env.tasks[i].visited != visited_before[i]:
                for o in cell_orders[i].pop(env.positions[i], []):
                    sequence.append((step, i, o.id))
            if env.tasks[i].completed:
                task = next_task(i)
                if task is not None:
                    env.assign(i, task)
                    for o in assigned[i]:
                        cell_orders[i].setdefault(o.pickup, []).append(o)
        if env.done() and not queue:
            return EvalResult(completed=True, steps=step,
                              order_sequence=sequence, paths=paths)
    return EvalResult(completed=False, steps=max_steps,
                      order_sequence=sequence, paths=paths)


def _nudge_action(state: StateVector, env: GridEnv, agent: int) -> int:
    """First valid move into a cell no other vehicle occupies."""
    occupied = {env.positions[j] for j in range(env.n_agvs) if j != agent}
    for action in state.valid_actions():
        dx, dy = ACTIONS[action]
        target = (state.position[0] + dx, state.position[1] + dy)
        if target not in occupied and (dx, dy) != (0, 0):
            return action
    return ACTIONS.index((0, 0))

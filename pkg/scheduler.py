"""Net-carbon minimizing charge scheduler over an N-session horizon.

Interval energies ``x_i`` in ``[0, p_max * delta_t]`` are chosen so that the
state of charge stays inside ``[soc_min, soc_max]`` at every interval
boundary and reaches each session's morning floor. Every SOC constraint
is a bound on a prefix sum of ``x``, so the feasible set is a base
polyhedron and the cheapest schedule is found greedily: intervals are
filled in order of increasing intensity (earliest first on ties), each
to the largest value that still admits a feasible completion.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

TOLERANCE = 1e-9
ORACLE_MAX_INTERVALS = 16


class SchedulerError(RuntimeError):
    """Base class for scheduling errors."""


class Infeasible(SchedulerError):
    def __init__(self, session: int, required_soc: float, achievable_soc: float):
        self.session = session
        self.required_soc = required_soc
        self.achievable_soc = achievable_soc
        super().__init__(
            f"session {session}: requires {required_soc:.3f}% SOC but at most "
            f"{achievable_soc:.3f}% is achievable"
        )


class TooLarge(SchedulerError):
    pass


class InfeasibleOnGrid(SchedulerError):
    pass


class BatteryParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    capacity: float = Field(50.0, gt=0)
    p_max: float = Field(10.0, gt=0)
    soc_min: float = 20.0
    soc_max: float = 80.0

    @model_validator(mode="after")
    def check_soc_limits(self):
        if not 0 <= self.soc_min < self.soc_max <= 100:
            raise ValueError(
                f"need 0 <= soc_min < soc_max <= 100, got {self.soc_min}, {self.soc_max}"
            )
        return self

    @property
    def kwh_per_point(self) -> float:
        return self.capacity / 100.0


@dataclass(frozen=True)
class SessionWindow:
    """Charging window of one session; ``k_e`` is inclusive.

    ``k_e == k_b`` is accepted: a session that is already under way when a
    solve starts may have a single interval left.
    """

    k_b: int
    k_e: int
    intensities: np.ndarray

    def __post_init__(self):
        intensities = np.array(self.intensities, dtype=float)
        intensities.setflags(write=False)
        object.__setattr__(self, "intensities", intensities)
        if self.k_e < self.k_b:
            raise ValueError(f"session ends ({self.k_e}) before it begins ({self.k_b})")
        if len(intensities) != self.k_e - self.k_b + 1:
            raise ValueError(
                f"expected {self.k_e - self.k_b + 1} intensities, got {len(intensities)}"
            )
        if not np.all(np.isfinite(intensities)) or np.any(intensities < 0):
            raise ValueError("intensities must be finite and non-negative")

    def __len__(self) -> int:
        return len(self.intensities)


@dataclass(frozen=True)
class HorizonProblem:
    """One MPC solve: N sessions, the demands between them and their floors.

    ``demands[s]`` is the energy consumed between session ``s`` and ``s + 1``;
    an extra trailing demand is accepted and ignored.
    """

    sessions: Tuple[SessionWindow, ...]
    demands: Tuple[float, ...]
    soc0: float
    morning_floors: Tuple[float, ...]
    battery: BatteryParams = BatteryParams()
    delta_t: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "sessions", tuple(self.sessions))
        object.__setattr__(self, "demands", tuple(float(d) for d in self.demands))
        object.__setattr__(self, "morning_floors", tuple(float(f) for f in self.morning_floors))
        n = len(self.sessions)
        battery = self.battery
        if n == 0:
            raise ValueError("a horizon needs at least one session")
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        if len(self.demands) not in (n - 1, n):
            raise ValueError(f"expected {n - 1} or {n} demands, got {len(self.demands)}")
        if any(d < 0 for d in self.demands):
            raise ValueError("demands must be non-negative")
        if len(self.morning_floors) != n:
            raise ValueError(f"expected {n} morning floors, got {len(self.morning_floors)}")
        if not battery.soc_min - TOLERANCE <= self.soc0 <= battery.soc_max + TOLERANCE:
            raise ValueError(f"soc0 {self.soc0} outside [{battery.soc_min}, {battery.soc_max}]")
        object.__setattr__(self, "soc0", min(max(self.soc0, battery.soc_min), battery.soc_max))
        for floor in self.morning_floors:
            if not battery.soc_min - TOLERANCE <= floor <= battery.soc_max + TOLERANCE:
                raise ValueError(f"morning floor {floor} outside [{battery.soc_min}, {battery.soc_max}]")
        object.__setattr__(self, "morning_floors", tuple(
            min(max(f, battery.soc_min), battery.soc_max) for f in self.morning_floors
        ))
        for before, after in zip(self.sessions, self.sessions[1:]):
            if after.k_b <= before.k_e:
                raise ValueError("sessions must be ordered and non-overlapping")

    @classmethod
    def from_intensities(
        cls,
        intensities: Sequence[Sequence[float]],
        demands: Sequence[float],
        soc0: float,
        morning_floors: Sequence[float],
        battery: BatteryParams = BatteryParams(),
        delta_t: float = 0.5,
    ) -> "HorizonProblem":
        """Build a problem with back-to-back session windows starting at interval 1."""
        sessions = []
        k_b = 1
        for values in intensities:
            sessions.append(SessionWindow(k_b, k_b + len(values) - 1, values))
            k_b += len(values)
        return cls(tuple(sessions), tuple(demands), soc0, tuple(morning_floors), battery, delta_t)

    @property
    def n_intervals(self) -> int:
        return sum(len(s) for s in self.sessions)

    @property
    def intensities(self) -> np.ndarray:
        return np.concatenate([s.intensities for s in self.sessions])

    @property
    def offsets(self) -> np.ndarray:
        """Flat boundary index of each session start, plus the final end."""
        return np.concatenate([[0], np.cumsum([len(s) for s in self.sessions])]).astype(int)

    def consumed_before(self) -> np.ndarray:
        """Energy consumed before each session starts (kWh)."""
        n = len(self.sessions)
        return np.concatenate([[0.0], np.cumsum(self.demands[: n - 1])])


@dataclass(frozen=True)
class PowerSchedule:
    powers: Tuple[np.ndarray, ...]
    predicted_soc: Tuple[np.ndarray, ...]
    predicted_cost: float
    shortfall_sessions: Tuple[int, ...] = field(default_factory=tuple)

    @property
    def flat_powers(self) -> np.ndarray:
        return np.concatenate(self.powers)

    @property
    def first_power(self) -> float:
        return float(self.powers[0][0])


def default_floors(
    demands: Sequence[float],
    morning_floors: Sequence[float],
    battery: BatteryParams,
) -> List[float]:
    """Morning floors that also leave room for the following day's driving.

    Floor ``s`` is ``max(morning_floors[s], soc_min + demand_s * 100 / B)``,
    capped at ``soc_max``. Sessions without a known demand keep their
    morning floor.
    """
    floors = []
    for s, floor in enumerate(morning_floors):
        if s < len(demands):
            floor = max(floor, battery.soc_min + demands[s] / battery.kwh_per_point)
        floors.append(min(floor, battery.soc_max))
    return floors


def _prefix_bounds(problem: HorizonProblem) -> Tuple[np.ndarray, np.ndarray]:
    """Lower/upper bounds on cumulative charged energy at each flat boundary."""
    battery = problem.battery
    floors = problem.morning_floors
    scale = battery.kwh_per_point
    offsets = problem.offsets
    consumed = problem.consumed_before()
    n = offsets[-1]

    lower = np.full(n + 1, -np.inf)
    upper = np.full(n + 1, np.inf)
    for s in range(len(problem.sessions)):
        a, b = offsets[s], offsets[s + 1]
        lower[a:b + 1] = np.maximum(lower[a:b + 1], consumed[s] + (battery.soc_min - problem.soc0) * scale)
        upper[a:b + 1] = np.minimum(upper[a:b + 1], consumed[s] + (battery.soc_max - problem.soc0) * scale)
        lower[b] = max(lower[b], consumed[s] + (floors[s] - problem.soc0) * scale)
    lower[0] = upper[0] = 0.0
    return lower, upper


def _propagate(lower, upper, lo, hi):
    """Reachable (forward) and completable (backward) ranges of each prefix sum."""
    s = np.concatenate([[0.0], np.cumsum(lo)])
    h = np.concatenate([[0.0], np.cumsum(hi)])
    forward_min = s + np.maximum.accumulate(lower - s)
    forward_max = h + np.minimum.accumulate(upper - h)
    backward_min = h + np.maximum.accumulate((lower - h)[::-1])[::-1]
    backward_max = s + np.minimum.accumulate((upper - s)[::-1])[::-1]
    return forward_min, forward_max, backward_min, backward_max


def _raise_infeasible(problem: HorizonProblem, boundary: int, required: float, achievable: float):
    offsets = problem.offsets
    session = int(np.searchsorted(offsets, boundary, side="left")) - 1
    consumed = problem.consumed_before()[session]
    scale = problem.battery.kwh_per_point
    raise Infeasible(
        session,
        required_soc=problem.soc0 + (required - consumed) / scale,
        achievable_soc=problem.soc0 + (achievable - consumed) / scale,
    )


def solve(problem: HorizonProblem) -> PowerSchedule:
    """Minimum-emission power schedule for ``problem``.

    Raises:
        Infeasible: for the first session whose floor (or the SOC window
            around it) cannot be met.
    """
    n = problem.n_intervals
    cap = problem.battery.p_max * problem.delta_t
    costs = problem.intensities

    lower, upper = _prefix_bounds(problem)
    lower = np.maximum.accumulate(lower)
    upper = np.minimum.accumulate(upper[::-1])[::-1]
    # With non-negative costs some optimum charges exactly the minimum total
    total = max(0.0, lower[-1])
    lower[-1] = total
    upper = np.minimum(upper, total)

    lo = np.zeros(n)
    hi = np.full(n, cap)
    forward_min, forward_max, _, _ = _propagate(lower, upper, lo, hi)
    bad = np.flatnonzero(forward_min > forward_max + TOLERANCE)
    if len(bad):
        m = int(bad[0])
        _raise_infeasible(problem, m, forward_min[m], forward_max[m])

    x = np.zeros(n)
    assigned = 0.0
    for i in np.lexsort((np.arange(n), costs)):
        if assigned >= total - TOLERANCE:
            break
        forward_min, forward_max, backward_min, backward_max = _propagate(lower, upper, lo, hi)
        most = min(hi[i], backward_max[i + 1] - forward_min[i])
        least = max(lo[i], backward_min[i + 1] - forward_max[i])
        value = min(max(most, least, 0.0), cap)
        x[i] = lo[i] = hi[i] = value
        assigned += value
    powers = x / problem.delta_t
    logger.debug(f"Solved {len(problem.sessions)} session(s), {n} intervals, {total:.3f} kWh")
    return _schedule(problem, powers)


def _split(problem: HorizonProblem, flat: np.ndarray) -> Tuple[np.ndarray, ...]:
    offsets = problem.offsets
    return tuple(np.array(flat[offsets[s]:offsets[s + 1]]) for s in range(len(problem.sessions)))


def _schedule(problem: HorizonProblem, powers: np.ndarray, shortfall: Sequence[int] = ()) -> PowerSchedule:
    powers = np.asarray(powers, dtype=float)
    return PowerSchedule(
        powers=_split(problem, powers),
        predicted_soc=tuple(simulate_soc(problem, powers)),
        predicted_cost=schedule_cost(problem, powers),
        shortfall_sessions=tuple(shortfall),
    )


def simulate_soc(problem: HorizonProblem, powers) -> List[np.ndarray]:
    """SOC at every boundary of every session.

    Entry ``s`` has ``len(session) + 1`` values, from the session start
    (after the previous day's consumption) to its end.
    """
    powers = np.asarray(powers, dtype=float)
    scale = problem.battery.kwh_per_point
    offsets = problem.offsets
    trajectories = []
    soc = problem.soc0
    for s in range(len(problem.sessions)):
        chunk = powers[offsets[s]:offsets[s + 1]]
        trajectory = soc + np.concatenate([[0.0], np.cumsum(chunk * problem.delta_t)]) / scale
        trajectories.append(trajectory)
        soc = trajectory[-1]
        if s < len(problem.sessions) - 1:
            soc -= problem.demands[s] / scale
    return trajectories


def schedule_cost(problem: HorizonProblem, powers) -> float:
    """Predicted emissions (gCO2) of ``powers`` under the problem's intensities."""
    powers = np.asarray(powers, dtype=float)
    return float(np.dot(problem.intensities, powers) * problem.delta_t)


def check_schedule(problem: HorizonProblem, powers, tol: float = TOLERANCE) -> List[str]:
    """Constraint violations of ``powers``; empty when the schedule is valid."""
    if isinstance(powers, PowerSchedule):
        powers = powers.flat_powers
    powers = np.asarray(powers, dtype=float)
    battery = problem.battery
    violations = []
    if len(powers) != problem.n_intervals:
        return [f"expected {problem.n_intervals} powers, got {len(powers)}"]
    for i in np.flatnonzero((powers < -tol) | (powers > battery.p_max + tol)):
        violations.append(f"power {powers[i]} at interval {i} outside [0, {battery.p_max}]")
    for s, trajectory in enumerate(simulate_soc(problem, powers)):
        if trajectory.min() < battery.soc_min - tol:
            violations.append(f"session {s}: SOC {trajectory.min()} below {battery.soc_min}")
        if trajectory.max() > battery.soc_max + tol:
            violations.append(f"session {s}: SOC {trajectory.max()} above {battery.soc_max}")
        if trajectory[-1] < problem.morning_floors[s] - tol:
            violations.append(
                f"session {s}: ends at {trajectory[-1]}, floor {problem.morning_floors[s]}"
            )
    return violations


def single_session(problem: HorizonProblem, session: int, soc0: float, floor: float) -> HorizonProblem:
    return HorizonProblem(
        (problem.sessions[session],), (), soc0, (floor,), problem.battery, problem.delta_t
    )


def per_session_cost(problem: HorizonProblem) -> Tuple[float, np.ndarray]:
    """Cost of solving each session on its own (N = 1) and chaining the results.

    Each session's floor is raised to cover the next day's demand so the
    chained schedule is feasible for the full horizon.
    """
    battery = problem.battery
    soc = problem.soc0
    powers = []
    for s in range(len(problem.sessions)):
        floor = problem.morning_floors[s]
        if s < len(problem.sessions) - 1:
            floor = max(floor, battery.soc_min + problem.demands[s] / battery.kwh_per_point)
        floor = min(floor, battery.soc_max)
        schedule = solve(single_session(problem, s, soc, floor))
        powers.append(schedule.powers[0])
        soc = schedule.predicted_soc[0][-1]
        if s < len(problem.sessions) - 1:
            soc = max(soc - problem.demands[s] / battery.kwh_per_point, battery.soc_min)
    flat = np.concatenate(powers)
    return schedule_cost(problem, flat), flat


def uncontrolled_power(soc: float, battery: BatteryParams, delta_t: float) -> float:
    """Charge at full power until soc_max, partial power on the last interval."""
    headroom = max(0.0, battery.soc_max - soc) * battery.kwh_per_point
    return min(battery.p_max, headroom / delta_t)


def uncontrolled_schedule(problem: HorizonProblem) -> PowerSchedule:
    """Plug-and-charge baseline; sessions that miss their floor are flagged."""
    battery = problem.battery
    scale = battery.kwh_per_point
    soc = problem.soc0
    powers = []
    shortfall = []
    for s, session in enumerate(problem.sessions):
        chunk = np.zeros(len(session))
        for k in range(len(session)):
            chunk[k] = uncontrolled_power(soc, battery, problem.delta_t)
            soc = min(soc + chunk[k] * problem.delta_t / scale, battery.soc_max)
        powers.append(chunk)
        if soc < problem.morning_floors[s] - TOLERANCE:
            shortfall.append(s)
        if s < len(problem.sessions) - 1:
            soc -= problem.demands[s] / scale
    return _schedule(problem, np.concatenate(powers), shortfall)


def brute_force_oracle(problem: HorizonProblem, levels: int = 2) -> PowerSchedule:
    """Exhaustive search over ``levels`` evenly spaced power values per interval.

    Only for small problems (at most 16 intervals); used to verify solve.
    """
    n = problem.n_intervals
    if n > ORACLE_MAX_INTERVALS:
        raise TooLarge(f"{n} intervals exceeds the oracle bound of {ORACLE_MAX_INTERVALS}")
    if levels < 2:
        raise ValueError("levels must be >= 2")
    if levels ** n > 2 ** 22:
        raise TooLarge(f"{levels}^{n} grid points is too many to enumerate")

    grid = np.linspace(0.0, problem.battery.p_max, levels)
    candidates = np.array(list(itertools.product(grid, repeat=n)), dtype=float).reshape(-1, n)

    battery = problem.battery
    scale = battery.kwh_per_point
    offsets = problem.offsets
    feasible = np.ones(len(candidates), dtype=bool)
    soc = np.full(len(candidates), problem.soc0)
    for s in range(len(problem.sessions)):
        chunk = candidates[:, offsets[s]:offsets[s + 1]]
        trajectory = soc[:, None] + np.cumsum(chunk * problem.delta_t, axis=1) / scale
        trajectory = np.concatenate([soc[:, None], trajectory], axis=1)
        feasible &= trajectory.min(axis=1) >= battery.soc_min - TOLERANCE
        feasible &= trajectory.max(axis=1) <= battery.soc_max + TOLERANCE
        feasible &= trajectory[:, -1] >= problem.morning_floors[s] - TOLERANCE
        soc = trajectory[:, -1]
        if s < len(problem.sessions) - 1:
            soc = soc - problem.demands[s] / scale

    if not feasible.any():
        raise InfeasibleOnGrid(f"no feasible schedule on the {levels}-level grid")
    costs = candidates @ problem.intensities * problem.delta_t
    costs[~feasible] = np.inf
    best = int(np.argmin(costs))
    return _schedule(problem, candidates[best])

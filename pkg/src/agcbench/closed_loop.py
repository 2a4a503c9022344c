"""Sampled-data closed loop: MPC every sample, exact plant in between."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .discretization import discretize, zoh_global
from .exceptions import ConstraintViolationError, MPCInfeasibleError, TopologyError
from .mpc import MPCController, compute_setpoint
from .network import N_STATES, THETA, NetworkTopology, assemble_continuous

log = logging.getLogger(__name__)

LOAD_MODES = ("level", "increment")


@dataclass(frozen=True, order=True)
class LoadEvent:
    """Load change of one area at a sample instant.

    With ``load_mode="level"`` the area's load becomes ``value`` at ``time``;
    with ``"increment"`` ``value`` is added to the current load.
    """

    time: int
    area: int
    value: float

    def __post_init__(self):
        if int(self.time) != self.time or self.time < 0:
            raise ValueError(f"event time must be a nonnegative integer, got {self.time!r}")
        object.__setattr__(self, "time", int(self.time))
        if not np.isfinite(self.value):
            raise ValueError(f"event value must be finite, got {self.value!r}")


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    topology: NetworkTopology
    events: tuple = ()
    T_sim: int = 100
    Ts: float = 1.0
    load_mode: str = "level"

    def __post_init__(self):
        events = tuple(sorted(self.events, key=lambda e: e.time))
        ids = set(self.topology.area_ids)
        for ev in events:
            if ev.area not in ids:
                raise TopologyError(f"load event at t={ev.time} references unknown area {ev.area}")
        if int(self.T_sim) != self.T_sim or self.T_sim < 1:
            raise ValueError(f"T_sim must be a positive integer, got {self.T_sim!r}")
        if events and self.T_sim <= events[-1].time:
            raise ValueError(f"T_sim={self.T_sim} must exceed the last event time {events[-1].time}")
        if not np.isfinite(self.Ts) or self.Ts <= 0:
            raise ValueError(f"Ts must be positive, got {self.Ts!r}")
        if self.load_mode not in LOAD_MODES:
            raise ValueError(f"load_mode must be one of {LOAD_MODES}, got {self.load_mode!r}")
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "T_sim", int(self.T_sim))
        object.__setattr__(self, "Ts", float(self.Ts))

    @property
    def first_event_time(self):
        return self.events[0].time if self.events else self.T_sim

    def load_at(self, t):
        return load_at(self.events, t, self.topology.area_ids, self.load_mode)


def load_at(events, t, area_ids, mode="level"):
    """Load vector in force at sample ``t`` (events at ``t`` included)."""
    if mode not in LOAD_MODES:
        raise ValueError(f"load_mode must be one of {LOAD_MODES}, got {mode!r}")
    ids = list(area_ids)
    d = np.zeros(len(ids))
    for ev in sorted(events, key=lambda e: e.time):
        if ev.time > t:
            break
        k = ids.index(ev.area)
        if mode == "level":
            d[k] = ev.value
        else:
            d[k] += ev.value
    return d


@dataclass
class Trajectory:
    """Closed-loop history.

    ``x`` has ``T_sim + 1`` rows (samples 0..T_sim); ``u``, ``load``,
    ``x_ref`` and ``u_ref`` have ``T_sim`` rows.
    """

    x: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    load: np.ndarray = field(repr=False)
    x_ref: np.ndarray = field(repr=False)
    u_ref: np.ndarray = field(repr=False)
    area_ids: tuple
    Ts: float = 1.0
    diagnostics: list = field(default_factory=list, repr=False)
    scenario: str = ""
    scheme: str = ""
    variant: str = ""

    @property
    def T_sim(self):
        return self.u.shape[0]

    @property
    def n_areas(self):
        return self.u.shape[1]

    @property
    def theta(self):
        return self.x[:, THETA::N_STATES]

    @property
    def max_kkt_residual(self):
        return max((d.max_residual for d in self.diagnostics), default=0.0)


def check_trajectory_constraints(traj: Trajectory, topology: NetworkTopology, tol=1e-6):
    theta_excess = np.abs(traj.theta) - topology.theta_bounds
    if theta_excess.size and theta_excess.max() > tol:
        t, a = np.unravel_index(np.argmax(theta_excess), theta_excess.shape)
        raise ConstraintViolationError(
            f"angle bound of area {traj.area_ids[a]} violated by {theta_excess[t, a]:.3g} at t={t}"
        )
    u_excess = np.abs(traj.u) - topology.input_bounds
    if u_excess.size and u_excess.max() > tol:
        t, a = np.unravel_index(np.argmax(u_excess), u_excess.shape)
        raise ConstraintViolationError(
            f"input bound of area {traj.area_ids[a]} violated by {u_excess[t, a]:.3g} at t={t}"
        )


def run_closed_loop(scenario: ScenarioSpec, controller: MPCController, constraint_tol=1e-6) -> Trajectory:
    """Simulate ``scenario`` from rest under a fitted controller.

    The controller may predict with either discretization; the plant is
    always the exact global zero-order-hold model of the scenario topology.
    """
    topo = scenario.topology
    model = controller.model_
    if model.topology.area_ids != topo.area_ids:
        raise TopologyError(
            f"controller areas {model.topology.area_ids} differ from scenario areas {topo.area_ids}"
        )
    if abs(model.Ts - scenario.Ts) > 1e-12:
        raise ValueError(f"controller Ts={model.Ts} differs from scenario Ts={scenario.Ts}")
    plant = zoh_global(assemble_continuous(topo), scenario.Ts)
    n, M, T = plant.n_states, plant.n_areas, scenario.T_sim
    x = np.zeros((T + 1, n))
    u = np.zeros((T, M))
    load = np.zeros((T, M))
    x_ref = np.zeros((T, n))
    u_ref = np.zeros((T, M))
    diagnostics = []
    for t in range(T):
        d = scenario.load_at(t)
        sp = compute_setpoint(d)
        try:
            u_t, diag = controller.solve_step(x[t], d)
        except MPCInfeasibleError as exc:
            exc.step = t
            raise MPCInfeasibleError(f"step {t}: {exc}", step=t, constraint=exc.constraint) from exc
        load[t], x_ref[t], u_ref[t], u[t] = d, sp.x_O, sp.u_O, u_t
        diagnostics.append(diag)
        x[t + 1] = plant.step(x[t], u_t, d)
    traj = Trajectory(
        x=x, u=u, load=load, x_ref=x_ref, u_ref=u_ref, area_ids=topo.area_ids,
        Ts=scenario.Ts, diagnostics=diagnostics, scenario=scenario.name,
        scheme=model.scheme, variant=controller.terminal_.variant,
    )
    check_trajectory_constraints(traj, topo, constraint_tol)
    return traj


def simulate(scenario: ScenarioSpec, scheme="D", variant="zero", **controller_params) -> Trajectory:
    """Discretize, fit a controller and run the closed loop in one call."""
    model = discretize(scenario.topology, scheme, scenario.Ts)
    controller = MPCController(variant=variant, **controller_params).fit(model)
    return run_closed_loop(scenario, controller)

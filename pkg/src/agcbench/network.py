"""Continuous-time model of a multi-area power network.

Each generation area carries four states ordered as (angle, speed, mechanical
power, valve position) deviations. The full state vector is area-major, i.e.
``x = (x_1, ..., x_M)`` with ``x_i`` of length 4, in the order of
``NetworkTopology.areas``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .exceptions import AreaNotFoundError, ParameterError, TopologyError

N_STATES = 4
THETA, OMEGA, PM, PV = range(N_STATES)
STATE_NAMES = ("theta", "omega", "Pm", "Pv")


@dataclass(frozen=True)
class AreaParameters:
    """Physical constants and operating bounds of one generation area.

    Attributes
    ----------
    area_id : int
    H : float
        Inertia constant (s).
    R_speed : float
        Speed regulation (droop).
    D_load : float
        Load-frequency sensitivity.
    T_t, T_g : float
        Turbine and governor time constants (s).
    theta_max : float
        Bound on the angle deviation.
    u_max : float
        Bound on the power reference deviation (p.u.).
    """

    area_id: int
    H: float
    R_speed: float
    D_load: float
    T_t: float
    T_g: float
    theta_max: float = 0.1
    u_max: float = 0.5

    def __post_init__(self):
        for name in ("H", "R_speed", "T_t", "T_g", "theta_max", "u_max"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ParameterError(
                    f"area {self.area_id}: {name} must be positive, got {value!r}",
                    field=name,
                    area=self.area_id,
                )
        if not np.isfinite(self.D_load) or self.D_load < 0:
            raise ParameterError(
                f"area {self.area_id}: D_load must be nonnegative, got {self.D_load!r}",
                field="D_load",
                area=self.area_id,
            )


@dataclass(frozen=True)
class TieLine:
    """Undirected tie-line; stored with ``i < j``."""

    i: int
    j: int
    P: float

    def __post_init__(self):
        if self.i == self.j:
            raise TopologyError(f"tie-line ({self.i}, {self.j}) connects an area to itself")
        if not np.isfinite(self.P) or self.P <= 0:
            raise ParameterError(
                f"tie-line ({self.i}, {self.j}): P must be positive, got {self.P!r}", field="P"
            )
        if self.i > self.j:
            a, b = self.j, self.i
            object.__setattr__(self, "i", a)
            object.__setattr__(self, "j", b)

    @property
    def key(self):
        return (self.i, self.j)


@dataclass(frozen=True)
class NetworkTopology:
    areas: tuple[AreaParameters, ...]
    ties: tuple[TieLine, ...] = ()

    def __post_init__(self):
        areas = tuple(self.areas)
        ids = [a.area_id for a in areas]
        if len(set(ids)) != len(ids):
            raise TopologyError(f"duplicate area ids in {ids}")
        seen = {}
        for tie in self.ties:
            for end in (tie.i, tie.j):
                if end not in ids:
                    raise TopologyError(
                        f"tie-line ({tie.i}, {tie.j}) references unknown area {end}"
                    )
            if tie.key in seen:
                raise TopologyError(f"duplicate tie-line {tie.key}")
            seen[tie.key] = tie
        object.__setattr__(self, "areas", areas)
        object.__setattr__(self, "ties", tuple(sorted(seen.values(), key=lambda t: t.key)))

    @property
    def n_areas(self):
        return len(self.areas)

    @property
    def area_ids(self):
        return tuple(a.area_id for a in self.areas)

    def index_of(self, area_id):
        for k, a in enumerate(self.areas):
            if a.area_id == area_id:
                return k
        raise AreaNotFoundError(f"unknown area {area_id}")

    def area(self, area_id):
        return self.areas[self.index_of(area_id)]

    def neighbors(self, area_id):
        """Return ``{j: P_ij}`` for every area tied to ``area_id``."""
        self.index_of(area_id)
        out = {}
        for tie in self.ties:
            if tie.i == area_id:
                out[tie.j] = tie.P
            elif tie.j == area_id:
                out[tie.i] = tie.P
        return out

    def tie_sum(self, area_id):
        return float(sum(self.neighbors(area_id).values()))

    @property
    def theta_bounds(self):
        return np.array([a.theta_max for a in self.areas])

    @property
    def input_bounds(self):
        return np.array([a.u_max for a in self.areas])


@dataclass(frozen=True)
class ContinuousNetworkModel:
    topology: NetworkTopology
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    L: np.ndarray = field(repr=False)

    @property
    def n_areas(self):
        return self.topology.n_areas

    @property
    def n_states(self):
        return self.A.shape[0]


def build_area_matrices(p: AreaParameters, tie_sum: float):
    """Local matrices ``(A_ii, B_i, L_i)`` of one area.

    ``tie_sum`` is the sum of tie-line slopes to all neighbors; it only enters
    the speed row through the synchronizing-power term.
    """
    if not np.isfinite(tie_sum) or tie_sum < 0:
        raise ParameterError(f"tie_sum must be nonnegative, got {tie_sum!r}", field="tie_sum")
    two_h = 2.0 * p.H
    A = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-tie_sum / two_h, -p.D_load / two_h, 1.0 / two_h, 0.0],
            [0.0, 0.0, -1.0 / p.T_t, 1.0 / p.T_t],
            [0.0, -1.0 / (p.R_speed * p.T_g), 0.0, -1.0 / p.T_g],
        ]
    )
    B = np.array([[0.0], [0.0], [0.0], [1.0 / p.T_g]])
    L = np.array([[0.0], [-1.0 / two_h], [0.0], [0.0]])
    return A, B, L


def build_coupling_block(P_ij: float, H_i: float):
    if not np.isfinite(H_i) or H_i <= 0:
        raise ParameterError(f"H must be positive, got {H_i!r}", field="H")
    if not np.isfinite(P_ij) or P_ij <= 0:
        raise ParameterError(f"P must be positive, got {P_ij!r}", field="P")
    block = np.zeros((N_STATES, N_STATES))
    block[OMEGA, THETA] = P_ij / (2.0 * H_i)
    return block


def assemble_continuous(topology: NetworkTopology) -> ContinuousNetworkModel:
    M = topology.n_areas
    n = N_STATES * M
    A = np.zeros((n, n))
    B = np.zeros((n, M))
    L = np.zeros((n, M))
    for k, area in enumerate(topology.areas):
        a_ii, b_i, l_i = build_area_matrices(area, topology.tie_sum(area.area_id))
        s = slice(N_STATES * k, N_STATES * (k + 1))
        A[s, s] = a_ii
        B[s, k] = b_i[:, 0]
        L[s, k] = l_i[:, 0]
    for tie in topology.ties:
        ki, kj = topology.index_of(tie.i), topology.index_of(tie.j)
        si = slice(N_STATES * ki, N_STATES * (ki + 1))
        sj = slice(N_STATES * kj, N_STATES * (kj + 1))
        A[si, sj] = build_coupling_block(tie.P, topology.areas[ki].H)
        A[sj, si] = build_coupling_block(tie.P, topology.areas[kj].H)
    return ContinuousNetworkModel(topology=topology, A=A, B=B, L=L)


def remove_area(topology: NetworkTopology, area_id: int) -> NetworkTopology:
    """Disconnect an area together with every tie-line touching it."""
    topology.index_of(area_id)
    areas = tuple(a for a in topology.areas if a.area_id != area_id)
    ties = tuple(t for t in topology.ties if area_id not in (t.i, t.j))
    return NetworkTopology(areas=areas, ties=ties)


def make_topology(areas: Iterable[AreaParameters], ties: Iterable[tuple]) -> NetworkTopology:
    """Convenience constructor accepting ``(i, j, P)`` tuples for the ties."""
    return NetworkTopology(
        areas=tuple(areas),
        ties=tuple(t if isinstance(t, TieLine) else TieLine(*t) for t in ties),
    )


def state_index(area_pos: int, component: int) -> int:
    return N_STATES * area_pos + component

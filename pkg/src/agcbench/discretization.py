"""Exact zero-order-hold discretization of the network model.

Two schemes are available:

``"D"``
    one matrix exponential of the whole coupled system.
``"Dss"``
    one matrix exponential per area, where the neighbors' states are treated
    as exogenous inputs held constant over the sample. Input and load
    matrices stay block diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .network import N_STATES, ContinuousNetworkModel, NetworkTopology, assemble_continuous

SCHEMES = ("D", "Dss")


def normalize_scheme(scheme):
    key = str(scheme).strip().lower()
    for s in SCHEMES:
        if key == s.lower():
            return s
    raise ValueError(f"unknown discretization scheme {scheme!r}; expected one of {SCHEMES}")


@dataclass(frozen=True)
class DiscreteNetworkModel:
    topology: NetworkTopology
    A: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    L: np.ndarray = field(repr=False)
    Ts: float = 1.0
    scheme: str = "D"

    @property
    def n_areas(self):
        return self.topology.n_areas

    @property
    def n_states(self):
        return self.A.shape[0]

    def step(self, x, u, load):
        return self.A @ x + self.B @ u + self.L @ load


def matrix_exponential(M):
    """Matrix exponential with argument checking (scaling and squaring)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"matrix_exponential expects a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix_exponential input contains non-finite entries")
    return scipy.linalg.expm(M)


def _zoh(A, E, Ts):
    # exp(Ts * [[A, E], [0, 0]]) = [[Ad, Ed], [0, I]]
    n, m = A.shape[0], E.shape[1]
    aug = np.zeros((n + m, n + m))
    aug[:n, :n] = A
    aug[:n, n:] = E
    F = matrix_exponential(Ts * aug)
    return F[:n, :n], F[:n, n:]


def _check_ts(Ts):
    if not np.isfinite(Ts) or Ts <= 0:
        raise ValueError(f"sampling time must be positive, got {Ts!r}")


def zoh_global(cont: ContinuousNetworkModel, Ts: float = 1.0) -> DiscreteNetworkModel:
    _check_ts(Ts)
    M = cont.B.shape[1]
    Ad, Ed = _zoh(cont.A, np.hstack([cont.B, cont.L]), Ts)
    return DiscreteNetworkModel(
        topology=cont.topology, A=Ad, B=Ed[:, :M], L=Ed[:, M:], Ts=float(Ts), scheme="D"
    )


def zoh_per_area(topology_or_model, Ts: float = 1.0) -> DiscreteNetworkModel:
    _check_ts(Ts)
    if isinstance(topology_or_model, ContinuousNetworkModel):
        cont = topology_or_model
    else:
        cont = assemble_continuous(topology_or_model)
    M = cont.n_areas
    n = N_STATES * M
    Ad = np.zeros((n, n))
    Bd = np.zeros((n, M))
    Ld = np.zeros((n, M))
    for k in range(M):
        rows = np.arange(N_STATES * k, N_STATES * (k + 1))
        # only neighbor blocks that actually couple into this area become inputs
        others = [
            j for j in range(M)
            if j != k and np.any(cont.A[np.ix_(rows, range(N_STATES * j, N_STATES * (j + 1)))])
        ]
        cols = [np.arange(N_STATES * j, N_STATES * (j + 1)) for j in others]
        other_cols = np.concatenate(cols) if cols else np.zeros(0, dtype=int)
        E = np.hstack([cont.B[rows, k:k + 1], cont.L[rows, k:k + 1], cont.A[np.ix_(rows, other_cols)]])
        a_k, e_k = _zoh(cont.A[np.ix_(rows, rows)], E, Ts)
        Ad[np.ix_(rows, rows)] = a_k
        Bd[rows, k] = e_k[:, 0]
        Ld[rows, k] = e_k[:, 1]
        if other_cols.size:
            Ad[np.ix_(rows, other_cols)] = e_k[:, 2:]
    return DiscreteNetworkModel(topology=cont.topology, A=Ad, B=Bd, L=Ld, Ts=float(Ts), scheme="Dss")


def discretize(topology: NetworkTopology, scheme="D", Ts: float = 1.0) -> DiscreteNetworkModel:
    scheme = normalize_scheme(scheme)
    cont = assemble_continuous(topology)
    if scheme == "D":
        return zoh_global(cont, Ts)
    return zoh_per_area(cont, Ts)

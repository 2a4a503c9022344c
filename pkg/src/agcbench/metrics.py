"""Tie-line flows and the two performance indices.

``eta`` is the time average of the weighted squared deviation of states and
inputs from the load-dependent equilibrium. ``phi`` is the time average of
the absolute tie-line power, integrated over each sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mpc import DEFAULT_INPUT_WEIGHT, DEFAULT_STATE_WEIGHT
from .network import N_STATES, THETA


def tie_line_flow(P_ij, theta_i, theta_j):
    """Power sent from area i to area j."""
    return P_ij * (np.asarray(theta_i) - np.asarray(theta_j))


def tie_flows(traj, topology):
    """``(labels, flows)`` with one column per tie-line over samples ``0..T_sim``."""
    ids = list(traj.area_ids)
    labels = []
    cols = []
    for tie in topology.ties:
        i, j = ids.index(tie.i), ids.index(tie.j)
        labels.append((tie.i, tie.j))
        cols.append(tie_line_flow(tie.P, traj.x[:, N_STATES * i + THETA], traj.x[:, N_STATES * j + THETA]))
    flows = np.column_stack(cols) if cols else np.zeros((traj.x.shape[0], 0))
    return labels, flows


def _per_area(weight, n_areas, size):
    w = np.asarray(weight, dtype=float)
    if w.ndim == 0:
        w = w.reshape(1, 1)
    elif w.ndim == 1:
        w = np.diag(w)
    if w.shape == (size, size):
        return [w] * n_areas
    if w.shape == (size * n_areas, size * n_areas):
        return [w[k * size:(k + 1) * size, k * size:(k + 1) * size] for k in range(n_areas)]
    raise ValueError(f"weight of shape {w.shape} does not fit {n_areas} areas of size {size}")


def eta_terms(traj, Q=DEFAULT_STATE_WEIGHT, R=DEFAULT_INPUT_WEIGHT):
    """Per-step contributions to eta (before averaging)."""
    M, T = traj.n_areas, traj.T_sim
    if traj.x.shape[0] < T or traj.x_ref.shape[0] != T or traj.u_ref.shape != (T, M):
        raise ValueError("trajectory arrays have inconsistent lengths")
    Qs = _per_area(Q, M, N_STATES)
    Rs = _per_area(R, M, 1)
    ex = traj.x[:T] - traj.x_ref
    eu = traj.u - traj.u_ref
    out = np.zeros(T)
    for k in range(M):
        e = ex[:, N_STATES * k:N_STATES * (k + 1)]
        out += np.einsum("ti,ij,tj->t", e, Qs[k], e)
        out += Rs[k][0, 0] * eu[:, k] ** 2
    return out


def eta_index(traj, Q=DEFAULT_STATE_WEIGHT, R=DEFAULT_INPUT_WEIGHT):
    return float(eta_terms(traj, Q, R).sum() / traj.T_sim)


def phi_terms(traj, topology, directed=False):
    """Per-step total absolute tie power times ``Ts``.

    Each line is counted once unless ``directed`` is true, in which case the
    sum runs over ordered neighbor pairs and every line appears twice.
    """
    _, flows = tie_flows(traj, topology)
    T = traj.T_sim
    per_step = np.abs(flows[:T]).sum(axis=1) * traj.Ts
    return 2.0 * per_step if directed else per_step


def phi_index(traj, topology, directed=False):
    return float(phi_terms(traj, topology, directed).sum() / traj.T_sim)


@dataclass
class PerformanceReport:
    eta: float
    phi: float
    eta_per_step: np.ndarray = field(repr=False)
    phi_per_step: np.ndarray = field(repr=False)
    tie_labels: list = field(default_factory=list, repr=False)
    tie_flows: np.ndarray = field(default=None, repr=False)


def evaluate(traj, topology, Q=DEFAULT_STATE_WEIGHT, R=DEFAULT_INPUT_WEIGHT, directed=False):
    e_terms = eta_terms(traj, Q, R)
    p_terms = phi_terms(traj, topology, directed)
    labels, flows = tie_flows(traj, topology)
    return PerformanceReport(
        eta=float(e_terms.sum() / traj.T_sim),
        phi=float(p_terms.sum() / traj.T_sim),
        eta_per_step=e_terms,
        phi_per_step=p_terms,
        tie_labels=labels,
        tie_flows=flows,
    )

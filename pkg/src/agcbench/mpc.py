"""Centralized MPC for the AGC layer.

At every sample the finite-horizon problem is condensed into a QP over the
stacked input sequence ``U = (u_0, ..., u_{N-1})`` and only ``u_0`` is
applied. The predicted states are::

    X = Phi x_t + Gamma U + Lambda d,    X = (x_0, ..., x_N)

with the load ``d`` held constant over the horizon. Stage costs are squared
weighted norms of the deviations from the load-dependent equilibrium.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .discretization import DiscreteNetworkModel
from .exceptions import MPCInfeasibleError, QPInfeasibleError
from .network import N_STATES, PM, PV, THETA
from .qp import DEFAULT_TOL, Ellipsoid, QPProblem, solve_qp
from .terminal import (
    TerminalDesign,
    compute_terminal_level,
    design_terminal,
    normalize_variant,
    state_bounds_vector,
)

DEFAULT_HORIZON = 15
DEFAULT_STATE_WEIGHT = (500.0, 0.01, 0.01, 10.0)
DEFAULT_INPUT_WEIGHT = 10.0


@dataclass(frozen=True)
class Setpoint:
    x_O: np.ndarray
    u_O: np.ndarray


def compute_setpoint(load) -> Setpoint:
    """Equilibrium that absorbs each area's load locally.

    Angle and speed deviations are zero; mechanical power, valve position and
    power reference all equal the area's load.
    """
    d = np.asarray(load, dtype=float).reshape(-1)
    x_O = np.zeros(N_STATES * d.size)
    x_O[PM::N_STATES] = d
    x_O[PV::N_STATES] = d
    return Setpoint(x_O=x_O, u_O=d.copy())


def area_weights(n_areas, state_weight=DEFAULT_STATE_WEIGHT, input_weight=DEFAULT_INPUT_WEIGHT):
    """Block-diagonal ``(Q, R)`` repeating the per-area weights."""
    q = np.asarray(state_weight, dtype=float)
    if q.ndim == 1:
        q = np.diag(q)
    if q.shape != (N_STATES, N_STATES):
        raise ValueError(f"state_weight must be 4 diagonal entries or a 4x4 matrix, got shape {q.shape}")
    r = np.atleast_2d(np.asarray(input_weight, dtype=float))
    if r.shape != (1, 1):
        raise ValueError("input_weight must be a scalar")
    return np.kron(np.eye(n_areas), q), np.kron(np.eye(n_areas), r)


@dataclass
class MpcConfig:
    N: int
    Q: np.ndarray = field(repr=False)
    R: np.ndarray = field(repr=False)
    terminal: TerminalDesign
    state_bounds: np.ndarray = field(repr=False)
    input_bounds: np.ndarray = field(repr=False)
    tol: float = DEFAULT_TOL
    max_iter: int | None = None

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"horizon must be a positive integer, got {self.N!r}")
        self.N = int(self.N)
        self.Q = np.asarray(self.Q, dtype=float)
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T)).min() < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(0.5 * (self.R + self.R.T)).min() <= 0:
            raise ValueError("R must be positive definite")
        self.state_bounds = np.asarray(self.state_bounds, dtype=float)
        self.input_bounds = np.asarray(self.input_bounds, dtype=float)
        if np.any(self.state_bounds <= 0) or np.any(self.input_bounds <= 0):
            raise ValueError("bounds must be positive")

    @classmethod
    def default(cls, model, variant="zero", horizon=DEFAULT_HORIZON, **kwargs):
        Q, R = area_weights(model.n_areas)
        terminal = design_terminal(variant, model, Q, R)
        return cls(
            N=horizon, Q=Q, R=R, terminal=terminal,
            state_bounds=state_bounds_vector(model.topology),
            input_bounds=model.topology.input_bounds, **kwargs,
        )


@dataclass
class StepDiagnostics:
    objective: float
    iterations: int
    residuals: dict
    active: tuple = ()
    terminal_multiplier: float = 0.0
    terminal_level: float = 0.0

    @property
    def max_residual(self):
        return max(self.residuals.values()) if self.residuals else 0.0


class _Condensed:
    """Prediction matrices and the load-independent parts of the QP."""

    def __init__(self, model: DiscreteNetworkModel, cfg: MpcConfig):
        A, B, L = model.A, model.B, model.L
        n, m = B.shape
        N = cfg.N
        if cfg.Q.shape != (n, n) or cfg.R.shape != (m, m):
            raise ValueError("weights do not match model dimensions")
        if cfg.state_bounds.shape != (n,) or cfg.input_bounds.shape != (m,):
            raise ValueError("bounds do not match model dimensions")
        Phi = np.zeros(((N + 1) * n, n))
        Gamma = np.zeros(((N + 1) * n, N * m))
        Lam = np.zeros(((N + 1) * n, m))
        Phi[:n] = np.eye(n)
        for k in range(1, N + 1):
            rk, rp = slice(k * n, (k + 1) * n), slice((k - 1) * n, k * n)
            Phi[rk] = A @ Phi[rp]
            Gamma[rk] = A @ Gamma[rp]
            Gamma[rk, (k - 1) * m:k * m] = B
            Lam[rk] = A @ Lam[rp] + L
        Qbar = np.zeros(((N + 1) * n, (N + 1) * n))
        for k in range(N):
            Qbar[k * n:(k + 1) * n, k * n:(k + 1) * n] = cfg.Q
        if cfg.terminal.has_terminal_cost:
            Qbar[N * n:, N * n:] = cfg.terminal.S
        Rbar = np.kron(np.eye(N), cfg.R)
        self.n, self.m, self.N = n, m, N
        self.Phi, self.Gamma, self.Lam = Phi, Gamma, Lam
        self.Qbar, self.Rbar = Qbar, Rbar
        self.GtQ = Gamma.T @ Qbar
        H = 2.0 * (self.GtQ @ Gamma + Rbar)
        self.H = 0.5 * (H + H.T)
        self.cfg = cfg
        self.topology = model.topology
        self._build_static_rows()

    def _build_static_rows(self):
        n, m, N = self.n, self.m, self.N
        cfg = self.cfg
        ids = self.topology.area_ids
        rows, bounds, free_idx, free_sign, names = [], [], [], [], []
        eye = np.eye(N * m)
        for k in range(N):
            for a in range(m):
                b = cfg.input_bounds[a]
                if not np.isfinite(b):
                    continue
                for sgn, op in ((1.0, "<="), (-1.0, ">=")):
                    rows.append(sgn * eye[k * m + a])
                    bounds.append(b)
                    free_idx.append(0)
                    free_sign.append(0.0)
                    names.append(f"u[area {ids[a]}] {op} {sgn * b:g} at k={k}")
        bounded = np.flatnonzero(np.isfinite(cfg.state_bounds))
        for k in range(1, N):
            for c in bounded:
                r = k * n + c
                what = f"x[{c}]" if c % N_STATES != THETA else f"theta[area {ids[c // N_STATES]}]"
                b = cfg.state_bounds[c]
                for sgn, op in ((1.0, "<="), (-1.0, ">=")):
                    rows.append(sgn * self.Gamma[r])
                    bounds.append(b)
                    free_idx.append(r)
                    free_sign.append(sgn)
                    names.append(f"{what} {op} {sgn * b:g} at k={k}")
        self.G = np.array(rows) if rows else np.zeros((0, N * m))
        self.h0 = np.array(bounds, dtype=float)
        # h = h0 - sign * (free response at the row's predicted state)
        self._free_idx = np.array(free_idx, dtype=int)
        self._free_sign = np.array(free_sign, dtype=float)
        self.ineq_names = tuple(names)

    def build(self, x_t, load) -> QPProblem:
        n, m, N = self.n, self.m, self.N
        x_t = np.asarray(x_t, dtype=float).reshape(-1)
        d = np.asarray(load, dtype=float).reshape(-1)
        if x_t.size != n or d.size != m:
            raise ValueError(f"state must have {n} entries and load {m}, got {x_t.size} and {d.size}")
        sp = compute_setpoint(d)
        free = self.Phi @ x_t + self.Lam @ d
        X_O = np.tile(sp.x_O, N + 1)
        U_O = np.tile(sp.u_O, N)
        w = free - X_O
        f = 2.0 * (self.GtQ @ w - self.Rbar @ U_O)
        const = float(w @ self.Qbar @ w + U_O @ self.Rbar @ U_O)
        h = self.h0 - self._free_sign * free[self._free_idx]
        term = self.cfg.terminal
        G_N = self.Gamma[N * n:]
        free_N = free[N * n:]
        E = e = ellipsoid = None
        eq_names = ()
        if term.has_terminal_cost:
            level = compute_terminal_level(
                term.S, term.K, self.cfg.state_bounds, self.cfg.input_bounds, sp
            )
            if np.isinf(level):
                pass
            elif level > 0:
                ellipsoid = Ellipsoid(G_N, free_N, term.S, sp.x_O, level)
            else:
                E, e = G_N, sp.x_O - free_N
        else:
            E, e = G_N, sp.x_O - free_N
        if E is not None:
            ids = self.topology.area_ids
            eq_names = tuple(
                f"terminal x[{c}] (area {ids[c // N_STATES]}) == setpoint" for c in range(n)
            )
        return QPProblem(
            self.H, f, self.G, h, E, e, ellipsoid=ellipsoid, constant=const,
            ineq_names=self.ineq_names, eq_names=eq_names,
        )


def build_condensed_qp(model: DiscreteNetworkModel, cfg: MpcConfig, x_t, load) -> QPProblem:
    return _Condensed(model, cfg).build(x_t, load)


def _constraint_name(p, exc):
    idx, kind = exc.constraint, exc.kind
    if kind == "ellipsoid" or idx == -1:
        return "terminal ellipsoid"
    if idx is None:
        return "unknown constraint"
    mi = p.G.shape[0]
    if idx < mi:
        return p.ineq_names[idx]
    return p.eq_names[idx - mi]


def _solve(p: QPProblem, cfg: MpcConfig):
    try:
        z, info = solve_qp(p, tol=cfg.tol, max_iter=cfg.max_iter)
    except QPInfeasibleError as exc:
        name = _constraint_name(p, exc)
        raise MPCInfeasibleError(f"MPC problem infeasible; blocking constraint: {name}", constraint=name) from exc
    diag = StepDiagnostics(
        objective=info.objective,
        iterations=info.iterations,
        residuals=dict(info.residuals),
        active=tuple(p.ineq_names[i] for i in info.active if i < p.G.shape[0]),
        terminal_multiplier=info.mu,
        terminal_level=p.ellipsoid.level if p.ellipsoid is not None else 0.0,
    )
    return z, diag


def solve_step(model: DiscreteNetworkModel, cfg: MpcConfig, x_t, load):
    """First input of the optimal sequence and solver diagnostics."""
    p = build_condensed_qp(model, cfg, x_t, load)
    z, diag = _solve(p, cfg)
    return z[: model.n_areas].copy(), diag


class MPCController(BaseEstimator):
    """Centralized MPC following the estimator conventions.

    ``fit`` takes the controller's discrete prediction model, designs the
    terminal ingredients and caches the condensing matrices; ``predict`` maps
    measured states (one per row) and the loads known at those instants to
    the first optimal input.

    Parameters
    ----------
    horizon : int
    state_weight : sequence of 4 floats or 4x4 array
        Per-area state weight, repeated on the block diagonal.
    input_weight : float
    variant : {"full", "diag", "zero"}
        Terminal design (``"MPCfull"`` style labels are accepted too).
    diag_method : {"auto", "dare", "lmi"}
        See :func:`agcbench.terminal.design_terminal`.
    tol : float
        KKT residual tolerance of every QP solve.
    max_iter : int or None
        Active-set iteration budget per QP.
    """

    def __init__(
        self,
        horizon=DEFAULT_HORIZON,
        state_weight=DEFAULT_STATE_WEIGHT,
        input_weight=DEFAULT_INPUT_WEIGHT,
        variant="zero",
        diag_method="auto",
        tol=DEFAULT_TOL,
        max_iter=None,
    ):
        self.horizon = horizon
        self.state_weight = state_weight
        self.input_weight = input_weight
        self.variant = variant
        self.diag_method = diag_method
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, model: DiscreteNetworkModel, y=None):
        if not isinstance(model, DiscreteNetworkModel):
            raise TypeError(f"fit expects a DiscreteNetworkModel, got {type(model).__name__}")
        variant = normalize_variant(self.variant)
        Q, R = area_weights(model.n_areas, self.state_weight, self.input_weight)
        self.terminal_ = design_terminal(variant, model, Q, R, diag_method=self.diag_method)
        self.config_ = MpcConfig(
            N=self.horizon, Q=Q, R=R, terminal=self.terminal_,
            state_bounds=state_bounds_vector(model.topology),
            input_bounds=model.topology.input_bounds,
            tol=self.tol, max_iter=self.max_iter,
        )
        self.model_ = model
        self.condensed_ = _Condensed(model, self.config_)
        self.n_features_in_ = model.n_states
        self.n_outputs_ = model.n_areas
        return self

    def build_qp(self, x, load):
        check_is_fitted(self)
        return self.condensed_.build(x, load)

    def solve_step(self, x, load):
        p = self.build_qp(x, load)
        z, diag = _solve(p, self.config_)
        return z[: self.n_outputs_].copy(), diag

    def predict(self, X, load=None):
        check_is_fitted(self)
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        if load is None:
            load = np.zeros((X.shape[0], self.n_outputs_))
        load = np.asarray(load, dtype=float)
        if load.ndim == 1:
            load = np.broadcast_to(load, (X.shape[0], load.size))
        load = check_array(load, dtype=float)
        if load.shape != (X.shape[0], self.n_outputs_):
            raise ValueError(f"load must have shape {(X.shape[0], self.n_outputs_)}, got {load.shape}")
        return np.vstack([self.solve_step(x, d)[0] for x, d in zip(X, load)])

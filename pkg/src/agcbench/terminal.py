"""Terminal cost, auxiliary gain and terminal-set level for the MPC variants.

Every non-trivial design is checked against the decrease condition::

    (A + BK)' S (A + BK) - S <= -(Q + K'RK)

and the smallest eigenvalue of the negated left-minus-right side is reported
as ``decrease_margin``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .discretization import DiscreteNetworkModel, zoh_per_area
from .exceptions import DesignError
from .network import N_STATES, THETA

log = logging.getLogger(__name__)

VARIANTS = ("full", "diag", "zero")
_VARIANT_ALIASES = {
    "full": "full", "mpcfull": "full",
    "diag": "diag", "mpcdiag": "diag",
    "zero": "zero", "mpczero": "zero",
}
VARIANT_LABELS = {"full": "MPCfull", "diag": "MPCdiag", "zero": "MPCzero"}

MARGIN_TOL = 1e-8


def normalize_variant(variant):
    try:
        return _VARIANT_ALIASES[str(variant).strip().lower()]
    except KeyError:
        raise ValueError(f"unknown MPC variant {variant!r}; expected one of {VARIANTS}") from None


@dataclass(frozen=True)
class TerminalDesign:
    variant: str
    S: np.ndarray = field(repr=False)
    K: np.ndarray = field(repr=False)
    alpha: float = 0.0
    decrease_margin: float | None = None
    method: str = "zero"

    @property
    def has_terminal_cost(self):
        return self.variant != "zero"

    def with_level(self, alpha):
        return TerminalDesign(self.variant, self.S, self.K, float(alpha), self.decrease_margin, self.method)


def solve_dare(A, B, Q, R):
    """Stabilizing solution of the discrete algebraic Riccati equation.

    Returns ``(S, K)`` with ``K = -(R + B'SB)^{-1} B'SA`` so that ``A + BK``
    is Schur stable.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    n, m = B.shape
    if A.shape != (n, n) or Q.shape != (n, n) or R.shape != (m, m):
        raise ValueError(
            f"inconsistent shapes A{A.shape} B{B.shape} Q{Q.shape} R{R.shape}"
        )
    try:
        S = scipy.linalg.solve_discrete_are(A, B, Q, R)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DesignError(f"DARE has no stabilizing solution: {exc}") from exc
    S = 0.5 * (S + S.T)
    G = R + B.T @ S @ B
    K = -np.linalg.solve(G, B.T @ S @ A)
    residual = A.T @ S @ A - S - A.T @ S @ B @ np.linalg.solve(G, B.T @ S @ A) + Q
    rel = np.abs(residual).max() / max(np.abs(S).max(), 1e-300)
    if not np.isfinite(rel) or rel > 1e-9:
        raise DesignError(f"DARE residual {rel:.3e} (relative) exceeds 1e-9")
    rho = np.abs(np.linalg.eigvals(A + B @ K)).max()
    if rho >= 1.0:
        raise DesignError(f"DARE gain is not stabilizing (spectral radius {rho:.6f})")
    return S, K


def verify_decrease(S, K, A, B, Q, R):
    """Smallest eigenvalue of ``-[(A+BK)'S(A+BK) - S + Q + K'RK]``."""
    S, K, A, B, Q, R = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (S, K, A, B, Q, R))
    Acl = A + B @ K
    M = Acl.T @ S @ Acl - S + Q + K.T @ R @ K
    M = 0.5 * (M + M.T)
    return float(np.linalg.eigvalsh(-M).min())


def compute_terminal_level(S, K, state_bounds=None, input_bounds=None, setpoint=None):
    """Largest ``alpha`` with ``{v : v'Sv <= alpha}`` inside the bounds.

    ``state_bounds`` has one entry per state (``inf`` for free coordinates);
    ``input_bounds`` one per input. Bounds apply to ``x_O + v`` and
    ``u_O + K v`` when a setpoint is given, so each margin is the bound minus
    the setpoint's magnitude. Returns ``inf`` when no constraint binds.
    """
    S = np.atleast_2d(np.asarray(S, dtype=float))
    n = S.shape[0]
    try:
        chol = scipy.linalg.cho_factor(S)
    except np.linalg.LinAlgError as exc:
        raise DesignError("terminal cost S is not positive definite") from exc
    rows, margins = [], []
    if state_bounds is not None:
        sb = np.asarray(state_bounds, dtype=float).reshape(-1)
        if sb.size != n:
            raise ValueError(f"state_bounds has length {sb.size}, expected {n}")
        x_o = np.zeros(n) if setpoint is None else np.asarray(setpoint.x_O, dtype=float)
        for c in np.flatnonzero(np.isfinite(sb)):
            e = np.zeros(n)
            e[c] = 1.0
            rows.append(e)
            margins.append(sb[c] - abs(x_o[c]))
    if input_bounds is not None and K is not None:
        K = np.atleast_2d(np.asarray(K, dtype=float))
        ub = np.asarray(input_bounds, dtype=float).reshape(-1)
        u_o = np.zeros(ub.size) if setpoint is None else np.asarray(setpoint.u_O, dtype=float)
        for r in range(K.shape[0]):
            if np.isfinite(ub[r]) and np.any(K[r]):
                rows.append(K[r])
                margins.append(ub[r] - abs(u_o[r]))
    alpha = np.inf
    for c, b in zip(rows, margins):
        if b <= 0:
            return 0.0
        w = float(c @ scipy.linalg.cho_solve(chol, c))
        if w > 0:
            alpha = min(alpha, b * b / w)
    return float(alpha)


def _blocks(n_areas):
    return [slice(N_STATES * k, N_STATES * (k + 1)) for k in range(n_areas)]


def _sym_sqrt(M):
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _diag_from_dare(model, Q, R):
    """Per-area DARE on the diagonal blocks of the system-by-system model."""
    dss = model if model.scheme == "Dss" else zoh_per_area(model.topology, model.Ts)
    n, m = model.B.shape
    S = np.zeros((n, n))
    K = np.zeros((m, n))
    for k, s in enumerate(_blocks(m)):
        S_k, K_k = solve_dare(dss.A[s, s], dss.B[s, k:k + 1], Q[s, s], R[k:k + 1, k:k + 1])
        S[s, s] = S_k
        K[k, s] = K_k[0]
    return S, K


def _diag_from_lmi(A, B, Q, R, n_areas, slack):
    """Block-diagonal (S, K) from the decrease LMI, maximizing log det S^{-1}.

    With Y = S^{-1} and Z = K Y, the decrease condition is equivalent to::

        [ Y          (AY+BZ)'  Y Q^{1/2}  Z' R^{1/2} ]
        [ AY+BZ      Y         0          0          ]  >= 0
        [ Q^{1/2} Y  0         I          0          ]
        [ R^{1/2} Z  0         0          I          ]

    Weights are normalized to unit scale and inflated by ``1 + slack`` so the
    returned pair satisfies the unscaled inequality with a positive margin.
    """
    import cvxpy as cp

    n, m = B.shape
    c = 1.0 / max(np.abs(Q).max(), np.abs(R).max())
    Qh = _sym_sqrt((1.0 + slack) * c * Q)
    Rh = _sym_sqrt((1.0 + slack) * c * R)
    Ys = [cp.Variable((N_STATES, N_STATES), symmetric=True) for _ in range(n_areas)]
    Zs = [cp.Variable((1, N_STATES)) for _ in range(n_areas)]
    zero_nn = np.zeros((N_STATES, N_STATES))
    zero_1n = np.zeros((1, N_STATES))
    Y = cp.bmat([[Ys[i] if i == j else zero_nn for j in range(n_areas)] for i in range(n_areas)])
    Z = cp.bmat([[Zs[i] if i == j else zero_1n for j in range(n_areas)] for i in range(n_areas)])
    AYBZ = A @ Y + B @ Z
    lmi = cp.bmat(
        [
            [Y, AYBZ.T, Y @ Qh, Z.T @ Rh],
            [AYBZ, Y, np.zeros((n, n)), np.zeros((n, m))],
            [Qh @ Y, np.zeros((n, n)), np.eye(n), np.zeros((n, m))],
            [Rh @ Z, np.zeros((m, n)), np.zeros((m, n)), np.eye(m)],
        ]
    )
    problem = cp.Problem(cp.Maximize(cp.log_det(Y)), [0.5 * (lmi + lmi.T) >> 0])
    try:
        problem.solve(solver=cp.CLARABEL)
    except cp.error.SolverError as exc:
        raise DesignError(f"block-diagonal LMI solver failed: {exc}") from exc
    if problem.status not in ("optimal", "optimal_inaccurate"):
        raise DesignError(f"block-diagonal LMI is {problem.status}")
    S = np.zeros((n, n))
    K = np.zeros((m, n))
    for k, s in enumerate(_blocks(n_areas)):
        Y_k = 0.5 * (Ys[k].value + Ys[k].value.T)
        S_k = np.linalg.inv(Y_k)
        K[k, s] = (Zs[k].value @ S_k)[0]
        S[s, s] = 0.5 * (S_k + S_k.T) / c
    return S, K


def design_terminal(
    variant,
    model: DiscreteNetworkModel,
    Q,
    R,
    setpoint=None,
    diag_method="auto",
    lmi_slack=1e-3,
):
    """Terminal ingredients for one MPC variant on a discrete model.

    Parameters
    ----------
    variant : {"full", "diag", "zero"}
    model : DiscreteNetworkModel
        Prediction model of the controller.
    Q, R : ndarray
        Block-diagonal stage weights.
    setpoint : Setpoint, optional
        Used only for the terminal level; the level is recomputed by the
        controller whenever the load changes.
    diag_method : {"auto", "dare", "lmi"}
        ``"dare"`` assembles per-area Riccati solutions and fails if they do
        not certify the coupled system; ``"lmi"`` solves the block-diagonal
        decrease LMI; ``"auto"`` tries the former and falls back to the latter.
    """
    variant = normalize_variant(variant)
    n, m = model.B.shape
    Q = np.asarray(Q, dtype=float)
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if Q.shape != (n, n) or R.shape != (m, m):
        raise ValueError(f"weights Q{Q.shape}, R{R.shape} do not match model ({n} states, {m} inputs)")
    if variant == "zero":
        return TerminalDesign("zero", np.zeros((n, n)), np.zeros((m, n)), 0.0, None, "zero")

    if variant == "full":
        S, K = solve_dare(model.A, model.B, Q, R)
        method = "dare"
    else:
        if diag_method not in ("auto", "dare", "lmi"):
            raise ValueError(f"unknown diag_method {diag_method!r}")
        S = K = None
        method = diag_method
        if diag_method in ("auto", "dare"):
            S, K = _diag_from_dare(model, Q, R)
            margin = verify_decrease(S, K, model.A, model.B, Q, R)
            method = "dare"
            if margin < -MARGIN_TOL:
                if diag_method == "dare":
                    raise DesignError(
                        f"decentralized Riccati design does not certify the coupled model "
                        f"(decrease margin {margin:.6g})",
                        margin=margin,
                    )
                log.info("per-area DARE margin %.4g; falling back to block-diagonal LMI", margin)
                S = K = None
        if S is None:
            S, K = _diag_from_lmi(model.A, model.B, Q, R, m, lmi_slack)
            method = "lmi"

    margin = verify_decrease(S, K, model.A, model.B, Q, R)
    if margin < -MARGIN_TOL:
        raise DesignError(
            f"{VARIANT_LABELS[variant]} design violates the decrease condition (margin {margin:.6g})",
            margin=margin,
        )
    alpha = compute_terminal_level(
        S, K, state_bounds_vector(model.topology), model.topology.input_bounds, setpoint
    )
    return TerminalDesign(variant, S, K, alpha, margin, method)


def state_bounds_vector(topology):
    """Per-state bounds: angle rows bounded, everything else free."""
    sb = np.full(N_STATES * topology.n_areas, np.inf)
    sb[THETA::N_STATES] = topology.theta_bounds
    return sb

"""Dense strictly convex quadratic programming.

Problems have the form::

    minimize    0.5 z'Hz + f'z + constant
    subject to  G z <= h
                E z == e
                (T z + t - c)' W (T z + t - c) <= level     (optional)

The linear part is solved with the dual active-set method of Goldfarb and
Idnani: start from the unconstrained minimizer and add violated constraints
one at a time while keeping the multipliers dual feasible. The ellipsoid is
handled by a scalar search on its multiplier, each evaluation being a linear
QP with the multiplier folded into the Hessian.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.optimize

from .exceptions import QPConvergenceError, QPInfeasibleError

DEFAULT_TOL = 1e-8


def _as_matrix(a, ncols, name):
    if a is None:
        return np.zeros((0, ncols))
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[1] != ncols:
        raise ValueError(f"{name} has {a.shape[1]} columns, expected {ncols}")
    return a


def _as_vector(a, size, name):
    if a is None:
        return np.zeros(0)
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size != size:
        raise ValueError(f"{name} has length {a.size}, expected {size}")
    return a


@dataclass
class Ellipsoid:
    """Quadratic constraint ``(T z + t - center)' W (T z + t - center) <= level``."""

    T: np.ndarray
    t: np.ndarray
    W: np.ndarray
    center: np.ndarray
    level: float

    def __post_init__(self):
        self.T = np.atleast_2d(np.asarray(self.T, dtype=float))
        m = self.T.shape[0]
        self.t = _as_vector(self.t, m, "ellipsoid t")
        self.center = _as_vector(self.center, m, "ellipsoid center")
        self.W = np.asarray(self.W, dtype=float)
        if self.W.shape != (m, m):
            raise ValueError(f"ellipsoid W has shape {self.W.shape}, expected {(m, m)}")
        self.W = 0.5 * (self.W + self.W.T)
        if not np.isfinite(self.level) or self.level < 0:
            raise ValueError(f"ellipsoid level must be nonnegative, got {self.level!r}")

    def residual(self, z):
        r = self.T @ z + self.t - self.center
        return float(r @ self.W @ r - self.level)

    def gradient(self, z):
        r = self.T @ z + self.t - self.center
        return 2.0 * self.T.T @ (self.W @ r)


@dataclass
class QPProblem:
    H: np.ndarray
    f: np.ndarray
    G: np.ndarray = None
    h: np.ndarray = None
    E: np.ndarray = None
    e: np.ndarray = None
    ellipsoid: Ellipsoid = None
    constant: float = 0.0
    ineq_names: tuple = ()
    eq_names: tuple = ()

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        if self.H.ndim != 2 or self.H.shape[0] != self.H.shape[1]:
            raise ValueError(f"H must be square, got shape {self.H.shape}")
        n = self.H.shape[0]
        if not np.allclose(self.H, self.H.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(self.H).max())):
            raise ValueError("H must be symmetric")
        self.H = 0.5 * (self.H + self.H.T)
        self.f = _as_vector(self.f, n, "f")
        self.G = _as_matrix(self.G, n, "G")
        self.h = _as_vector(self.h, self.G.shape[0], "h")
        self.E = _as_matrix(self.E, n, "E")
        self.e = _as_vector(self.e, self.E.shape[0], "e")
        if self.ellipsoid is not None and self.ellipsoid.T.shape[1] != n:
            raise ValueError("ellipsoid map has the wrong number of columns")
        for name in ("H", "f", "G", "h", "E", "e"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} contains non-finite entries")

    @property
    def n(self):
        return self.f.size

    def objective(self, z):
        return float(0.5 * z @ self.H @ z + self.f @ z + self.constant)


@dataclass
class QPInfo:
    iterations: int
    objective: float
    active: tuple
    lam: np.ndarray = field(repr=False)
    nu: np.ndarray = field(repr=False)
    mu: float = 0.0
    residuals: dict = field(default_factory=dict)

    @property
    def max_residual(self):
        return max(self.residuals.values()) if self.residuals else 0.0


def kkt_residuals(p: QPProblem, z, lam, nu, mu=0.0):
    """Stationarity, primal feasibility and complementarity residuals.

    Stationarity is relative to ``max(1, |f|, |Hz|)`` and complementarity to
    ``max(1, |multipliers|)``; primal feasibility is absolute.
    """
    grad = p.H @ z + p.f
    stat = grad + p.G.T @ lam + p.E.T @ nu
    scale = max(1.0, np.abs(p.f).max(initial=0.0), np.abs(p.H @ z).max(initial=0.0))
    slack = p.G @ z - p.h
    primal = max(
        np.maximum(slack, 0.0).max(initial=0.0),
        np.abs(p.E @ z - p.e).max(initial=0.0),
    )
    lam_scale = max(1.0, np.abs(lam).max(initial=0.0), abs(mu))
    comp = np.abs(lam * slack).max(initial=0.0) / lam_scale
    dual = np.maximum(-lam, 0.0).max(initial=0.0)
    if p.ellipsoid is not None:
        ell = p.ellipsoid
        stat = stat + mu * ell.gradient(z)
        g = ell.residual(z)
        primal = max(primal, max(g, 0.0) / max(1.0, ell.level))
        comp = max(comp, abs(mu * g) / lam_scale)
        dual = max(dual, max(-mu, 0.0))
    return {
        "stationarity": float(np.abs(stat).max(initial=0.0) / scale),
        "primal": float(primal),
        "complementarity": float(comp),
        "dual": float(dual),
    }


def _goldfarb_idnani(H, f, G, h, E, e, max_iter):
    n = f.size
    mi, me = G.shape[0], E.shape[0]
    try:
        chol = scipy.linalg.cho_factor(H)
    except np.linalg.LinAlgError as exc:
        raise ValueError("H is not positive definite") from exc
    Hinv = scipy.linalg.cho_solve(chol, np.eye(n))
    Hinv = 0.5 * (Hinv + Hinv.T)
    rows = np.vstack([G, E])
    rhs = np.concatenate([h, e])
    sign = np.ones(mi + me)
    lam = np.zeros(mi + me)
    active = []
    z = -scipy.linalg.cho_solve(chol, f)
    scale = max(1.0, np.abs(rhs).max(initial=0.0))
    feas_tol = 1e-13 * scale

    def direction(nrow):
        Hn = Hinv @ nrow
        if not active:
            return -Hn, np.zeros(0), float(nrow @ Hn)
        N = rows[active] * sign[active][:, None]
        X = Hinv @ N.T
        S = N @ X
        dl = np.linalg.solve(S, -(N @ Hn))
        dz = -(Hn + X @ dl)
        return dz, dl, float(nrow @ Hn)

    iterations = 0
    for q in range(me):
        idx = mi + q
        s = rows[idx] @ z - rhs[idx]
        sign[idx] = 1.0 if s >= 0 else -1.0
        nrow = sign[idx] * rows[idx]
        dz, dl, nHn = direction(nrow)
        curv = -nrow @ dz
        iterations += 1
        if curv <= 1e-12 * nHn:
            if abs(s) <= 1e-10 * max(1.0, abs(rhs[idx])):
                continue  # redundant equality
            raise QPInfeasibleError(
                f"equality row {q} is inconsistent with the preceding equalities",
                constraint=idx, violation=abs(s), kind="equality",
            )
        t = abs(s) / curv
        z = z + t * dz
        if active:
            lam[active] += t * dl
        lam[idx] = t
        active.append(idx)

    is_eq = np.zeros(mi + me, dtype=bool)
    is_eq[mi:] = True
    while mi:
        v = G @ z - h
        if active:
            ineq_act = [a for a in active if a < mi]
            v[ineq_act] = -np.inf
        p = int(np.argmax(v))
        if v[p] <= feas_tol * max(1.0, abs(h[p])):
            break
        nrow = G[p]
        lam_p = 0.0
        while True:
            iterations += 1
            if iterations > max_iter:
                raise QPConvergenceError(
                    f"dual active-set iteration limit {max_iter} reached",
                    residuals={"violation": float(G[p] @ z - h[p])},
                )
            dz, dl, nHn = direction(nrow)
            curv = -nrow @ dz
            full = curv > 1e-12 * nHn
            t1 = (G[p] @ z - h[p]) / curv if full else np.inf
            t2, block = np.inf, None
            for j, a in enumerate(active):
                if not is_eq[a] and dl[j] < 0:
                    r = lam[a] / -dl[j]
                    if r < t2:
                        t2, block = r, j
            if not np.isfinite(t1) and not np.isfinite(t2):
                raise QPInfeasibleError(
                    f"inequality row {p} cannot be satisfied together with the working set",
                    constraint=p, violation=float(G[p] @ z - h[p]), kind="inequality",
                )
            if t2 < t1:
                if full:
                    z = z + t2 * dz
                lam[active] += t2 * dl
                lam_p += t2
                dropped = active.pop(block)
                lam[dropped] = 0.0
            else:
                z = z + t1 * dz
                if active:
                    lam[active] += t1 * dl
                lam_p += t1
                lam[p] = lam_p
                active.append(p)
                break
    return z, lam, sign, active, iterations, chol


def _polish(p, z, lam, sign, active):
    """Re-solve the KKT system of the final working set in one factorization."""
    n = p.n
    rows = np.vstack([p.G, p.E])
    rhs = np.concatenate([p.h, p.e])
    if not active:
        return z, lam
    N = rows[active]
    k = len(active)
    K = np.zeros((n + k, n + k))
    K[:n, :n] = p.H
    K[:n, n:] = N.T
    K[n:, :n] = N
    try:
        sol = np.linalg.solve(K, np.concatenate([-p.f, rhs[active]]))
    except np.linalg.LinAlgError:
        return z, lam
    new_lam = np.zeros_like(lam)
    new_lam[active] = sol[n:]
    return sol[:n], new_lam


def _unpack(p, lam, sign):
    mi = p.G.shape[0]
    return lam[:mi].copy(), (lam[mi:] * sign[mi:]).copy()


def _solve_linear(p: QPProblem, max_iter):
    z, lam_o, sign, active, iterations, _ = _goldfarb_idnani(p.H, p.f, p.G, p.h, p.E, p.e, max_iter)
    lam, nu = _unpack(p, lam_o, sign)
    res = kkt_residuals(p, z, lam, nu)
    # polish with signed multipliers: equality rows enter unoriented
    zp, lamp = _polish(p, z, np.zeros(p.G.shape[0] + p.E.shape[0]), sign, active)
    lam_p, nu_p = lamp[: p.G.shape[0]], lamp[p.G.shape[0]:]
    res_p = kkt_residuals(p, zp, lam_p, nu_p)
    if max(res_p.values()) < max(res.values()):
        z, lam, nu, res = zp, lam_p, nu_p, res_p
    info = QPInfo(
        iterations=iterations,
        objective=p.objective(z),
        active=tuple(sorted(int(a) for a in active)),
        lam=lam,
        nu=nu,
        residuals=res,
    )
    return z, info


def solve_qp(p: QPProblem, tol: float = DEFAULT_TOL, max_iter: int | None = None):
    """Solve a QP without (or ignoring an inactive) ellipsoid constraint.

    Returns
    -------
    z : ndarray
    info : QPInfo

    Raises
    ------
    QPInfeasibleError
        No point satisfies the constraints.
    QPConvergenceError
        The iteration budget ran out or the KKT residuals exceed ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if p.ellipsoid is not None:
        return solve_qp_ellipsoid(p, tol=tol, max_iter=max_iter)
    if max_iter is None:
        max_iter = 10 * (p.n + p.G.shape[0] + p.E.shape[0]) + 100
    z, info = _solve_linear(p, max_iter)
    if info.max_residual > tol:
        raise QPConvergenceError(
            f"KKT residuals {info.residuals} exceed tolerance {tol:g}", residuals=info.residuals
        )
    return z, info


def solve_qp_ellipsoid(p: QPProblem, tol: float = DEFAULT_TOL, max_iter: int | None = None):
    """Solve a QP whose feasible set also includes one ellipsoid.

    The Lagrangian term ``mu * ((Tz + t - c)'W(Tz + t - c) - level)`` is
    folded into the objective and ``mu >= 0`` is found by bracketing and
    Brent's method on the (monotone) constraint residual.
    """
    ell = p.ellipsoid
    if ell is None:
        raise ValueError("problem has no ellipsoid constraint")
    if max_iter is None:
        max_iter = 10 * (p.n + p.G.shape[0] + p.E.shape[0]) + 100
    base = dataclasses.replace(p, ellipsoid=None)
    TW = ell.T.T @ ell.W
    HT = TW @ ell.T
    HT = 0.5 * (HT + HT.T)
    offset = ell.t - ell.center
    const_shift = float(offset @ ell.W @ offset) - ell.level
    total_iter = 0

    def inner(mu):
        nonlocal total_iter
        sub = dataclasses.replace(
            base,
            H=base.H + 2.0 * mu * HT,
            f=base.f + 2.0 * mu * (TW @ offset),
            constant=base.constant + mu * const_shift,
        )
        z, info = _solve_linear(sub, max_iter)
        total_iter += info.iterations
        return z, info

    def finish(z, info, mu):
        res = kkt_residuals(p, z, info.lam, info.nu, mu)
        out = QPInfo(
            iterations=total_iter,
            objective=p.objective(z),
            active=info.active,
            lam=info.lam,
            nu=info.nu,
            mu=float(mu),
            residuals=res,
        )
        if out.max_residual > tol:
            raise QPConvergenceError(
                f"KKT residuals {res} exceed tolerance {tol:g}", residuals=res
            )
        return z, out

    z0, info0 = inner(0.0)
    if ell.residual(z0) <= 0.0:
        return finish(z0, info0, 0.0)

    mu_scale = max(np.abs(p.H).max(), 1.0) / max(np.abs(HT).max(), 1e-300)
    lo, hi = 0.0, 1e-6 * mu_scale
    cache = {}

    def g(mu):
        z, info = inner(mu)
        cache[mu] = (z, info)
        return ell.residual(z)

    while g(hi) > 0.0:
        lo, hi = hi, 4.0 * hi
        if hi > 1e14 * mu_scale:
            raise QPInfeasibleError(
                "ellipsoid constraint cannot be met together with the linear constraints",
                constraint=-1, violation=ell.residual(cache[lo][0]), kind="ellipsoid",
            )
    mu = scipy.optimize.brentq(g, lo, hi, xtol=1e-14 * hi, rtol=8.9e-16, maxiter=500)
    z, info = cache[mu] if mu in cache else inner(mu)
    if ell.residual(z) > 0.0:
        # residual at the root is tiny; when positive fall back to the feasible end
        # only if that end is still KKT-accurate
        zh, infoh = cache[hi]
        try:
            return finish(zh, infoh, hi)
        except QPConvergenceError:
            pass
    return finish(z, info, mu)

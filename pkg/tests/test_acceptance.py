"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL line."""

import time

import numpy as np
import pytest

from agcbench.closed_loop import simulate
from agcbench.discretization import discretize
from agcbench.experiments import ExperimentGrid, export_results, run_cell
from agcbench.metrics import phi_index
from agcbench.mpc import area_weights, compute_setpoint
from agcbench.network import assemble_continuous
from agcbench.qp import QPProblem, solve_qp
from agcbench.scenarios import REFERENCE_ETA, REFERENCE_PHI, builtin_scenario, builtin_topology
from agcbench.terminal import design_terminal, verify_decrease

from test_discretization import _rk4
from test_qp import enumerate_qp, random_qp


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else ""))
        assert ok, f"criterion {number} failed: {detail}"
    return emit


def _cell_key(cell):
    return int(cell.scenario[-1]), cell.scheme, cell.variant


def _unsquared_eta(traj):
    Q = np.diag([500, 0.01, 0.01, 10.0])
    total = 0.0
    for t in range(traj.T_sim):
        for k in range(traj.n_areas):
            e = traj.x[t, 4 * k:4 * k + 4] - traj.x_ref[t, 4 * k:4 * k + 4]
            total += np.sqrt(e @ Q @ e) + np.sqrt(10.0) * abs(traj.u[t, k] - traj.u_ref[t, k])
    return total / traj.T_sim


def test_criterion1_eta_table(grid_results, report):
    worst = []
    for cell in grid_results:
        ref = REFERENCE_ETA[_cell_key(cell)]
        tol = max(0.05 * ref, 0.001)
        worst.append((abs(cell.eta - ref) / tol, cell.scenario, cell.scheme, cell.variant, cell.eta, ref))
    ok_cells = all(w[0] <= 1.0 for w in worst) and len(worst) == 18
    # norm calibration on scenario 1 / D / zero
    s1 = next(c for c in grid_results if _cell_key(c) == (1, "D", "zero"))
    squared, unsquared = s1.eta, _unsquared_eta(s1.trajectory)
    calibrated = abs(squared - 0.0249) <= 0.001 and abs(unsquared - 0.0249) > 0.001
    # per-cell runtime budget
    start = time.perf_counter()
    run_cell(builtin_scenario(2), "Dss", "diag")
    elapsed = time.perf_counter() - start
    w = max(worst)
    report(1, "eta matches the benchmark table", ok_cells and calibrated and elapsed < 10.0,
           f"worst {w[1]}/{w[2]}/{w[3]} eta={w[4]:.6f} ref={w[5]} at {w[0]:.2f} of tolerance; "
           f"squared norm {squared:.5f}, unsquared {unsquared:.5f}; slowest-cell time {elapsed:.2f}s")


def test_criterion2_phi_table(grid_results, report):
    worst = []
    for cell in grid_results:
        ref = REFERENCE_PHI[_cell_key(cell)]
        worst.append((abs(cell.phi - ref) / ref, cell.scenario, cell.scheme, cell.variant, cell.phi, ref))
    ok_cells = all(w[0] <= 0.15 for w in worst)
    s1 = next(c for c in grid_results if _cell_key(c) == (1, "D", "zero"))
    single = s1.phi
    double = phi_index(s1.trajectory, s1.spec.topology, directed=True)
    calibrated = abs(single - 0.0030) <= 0.15 * 0.0030 and abs(double - 0.0030) > 0.15 * 0.0030
    w = max(worst)
    report(2, "phi within 15% of the benchmark table", ok_cells and calibrated,
           f"worst {w[1]}/{w[2]}/{w[3]} phi={w[4]:.6f} ref={w[5]} ({100 * w[0]:.1f}%); "
           f"single count {single:.5f}, double count {double:.5f}")


def test_criterion3_variants_indistinguishable(grid_results, report):
    spreads = {}
    for cell in grid_results:
        spreads.setdefault((cell.scenario, cell.scheme), []).append(cell.eta)
    worst = max((max(v) - min(v), k) for k, v in spreads.items())
    report(3, "eta spread across terminal variants <= 1e-3", worst[0] <= 1e-3 and len(spreads) == 6,
           f"largest spread {worst[0]:.2e} at {worst[1][0]}/{worst[1][1]}")


def test_criterion4_scheme_consistency(grid_results, report):
    by = {(c.scenario, c.scheme, c.variant): c.eta for c in grid_results}
    gaps = [(abs(by[(s, "D", v)] - by[(s, "Dss", v)]), s, v)
            for (s, sch, v) in by if sch == "D"]
    worst = max(gaps)
    report(4, "|eta(D) - eta(Dss)| <= 2e-4", worst[0] <= 2e-4 and len(gaps) == 9,
           f"largest gap {worst[0]:.2e} at {worst[1]}/{worst[2]}")


def test_criterion5_property_suites(grid_results, report):
    rng = np.random.default_rng(5)
    failures = []

    eq = 0.0
    for sid in (1, 2, 3):
        topo = builtin_topology(sid)
        models = [assemble_continuous(topo)] + [discretize(topo, s) for s in ("D", "Dss")]
        for _ in range(100):
            d = rng.uniform(-0.5, 0.5, size=topo.n_areas)
            sp = compute_setpoint(d)
            cont = models[0]
            eq = max(eq, np.abs(cont.A @ sp.x_O + cont.B @ sp.u_O + cont.L @ d).max())
            for m in models[1:]:
                eq = max(eq, np.abs(m.step(sp.x_O, sp.u_O, d) - sp.x_O).max())
    if eq > 1e-10:
        failures.append(f"equilibrium residual {eq:.2e}")

    zoh = 0.0
    for sid in (1, 2, 3):
        cont = assemble_continuous(builtin_topology(sid))
        D = discretize(builtin_topology(sid), "D")
        Dss = discretize(builtin_topology(sid), "Dss")
        x = rng.normal(scale=0.1, size=cont.n_states)
        u = rng.normal(scale=0.2, size=cont.n_areas)
        d = rng.normal(scale=0.2, size=cont.n_areas)
        ref = _rk4(lambda s: cont.A @ s + cont.B @ u + cont.L @ d, x, 1.0, 1000)
        zoh = max(zoh, np.abs(D.step(x, u, d) - ref).max())
        pred = Dss.step(x, u, d)
        for k in range(cont.n_areas):
            s = slice(4 * k, 4 * k + 4)
            mask = np.ones(cont.n_states, bool)
            mask[s] = False
            frozen = cont.A[s][:, mask] @ x[mask]
            ref_k = _rk4(lambda xi: cont.A[s, s] @ xi + cont.B[s, k] * u[k] + cont.L[s, k] * d[k] + frozen,
                         x[s], 1.0, 1000)
            zoh = max(zoh, np.abs(pred[s] - ref_k).max())
    if zoh > 1e-8:
        failures.append(f"ZOH error {zoh:.2e}")

    dare_res, margin = 0.0, np.inf
    for sid in (1, 2, 3):
        for scheme in ("D", "Dss"):
            model = discretize(builtin_topology(sid), scheme)
            Q, R = area_weights(model.n_areas)
            for v in ("full", "diag"):
                des = design_terminal(v, model, Q, R)
                margin = min(margin, verify_decrease(des.S, des.K, model.A, model.B, Q, R))
                if v == "full":
                    A, B, S = model.A, model.B, des.S
                    res = A.T @ S @ A - S + Q - A.T @ S @ B @ np.linalg.solve(R + B.T @ S @ B, B.T @ S @ A)
                    dare_res = max(dare_res, np.abs(res).max() / np.abs(S).max())
    if dare_res > 1e-9 or margin < -1e-8:
        failures.append(f"DARE residual {dare_res:.2e}, margin {margin:.2e}")

    kkt = max(c.trajectory.max_kkt_residual for c in grid_results)
    qp_err = 0.0
    qrng = np.random.default_rng(7)
    for _ in range(200):
        H, f, G, h, E, e = random_qp(qrng)
        ref = enumerate_qp(H, f, G, h, E, e)
        if ref is None:
            continue
        z, _ = solve_qp(QPProblem(H, f, G, h, E, e))
        qp_err = max(qp_err, np.abs(z - ref).max())
    if kkt > 1e-8 or qp_err > 1e-6:
        failures.append(f"KKT {kkt:.2e}, oracle gap {qp_err:.2e}")

    theta = max(np.abs(c.trajectory.theta).max() for c in grid_results)
    u_excess = max((np.abs(c.trajectory.u) - c.spec.topology.input_bounds).max() for c in grid_results)
    if theta > 0.1 + 1e-6 or u_excess > 1e-6:
        failures.append(f"max |theta| {theta:.6f}, input excess {u_excess:.2e}")

    causal = all(
        not c.trajectory.x[: c.spec.first_event_time + 1].any()
        and not c.trajectory.u[: c.spec.first_event_time].any()
        for c in grid_results
    )
    if not causal:
        failures.append("nonzero response before first event")

    report(5, "property suites", not failures and all(c.ok for c in grid_results),
           "; ".join(failures) or
           f"eq {eq:.1e}, zoh {zoh:.1e}, dare {dare_res:.1e}, margin {margin:.1e}, "
           f"kkt {kkt:.1e}, qp {qp_err:.1e}, max|theta| {theta:.4f}")


def test_criterion6_determinism(grid_results, tmp_path, report):
    from agcbench.experiments import run_experiment_grid

    again = run_experiment_grid(ExperimentGrid(jobs=1))
    dirs = []
    for k, results in enumerate((grid_results, again)):
        d = tmp_path / f"run{k}"
        export_results(results, "json", d / "summary.json")
        export_results(results, "csv", d)
        dirs.append(d)
    names = sorted(p.name for p in dirs[0].iterdir())
    same = names == sorted(p.name for p in dirs[1].iterdir()) and all(
        (dirs[0] / n).read_bytes() == (dirs[1] / n).read_bytes() for n in names
    )
    report(6, "repeated full-grid exports are byte-identical", same and len(names) == 19,
           f"{len(names)} files compared (parallel vs serial run)")

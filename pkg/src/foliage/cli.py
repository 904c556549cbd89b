"""Command-line interface: scenario runs, CSV data products, JSON reports.

Usage::

    foliage <subcommand> --scenario <name|path> [--out DIR] [--seed N] [--step H]

Subcommands: check-involutive, connection, compare, geodesic, transport,
jacobi, leaf, chart, verify.  Every run writes one JSON report; data-bearing
subcommands write CSV files alongside it.  Reports are byte-stable for a
fixed scenario config and seed: floats are serialized with 17 significant
digits and probe points come from the seeded generator.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, checks
from .connection import canonical_at, curvature_at, eval_connection, levi_civita_at
from .connection import schouten_van_kampen_christoffels, torsion_at, vranceanu_christoffels
from .errors import FoliageError
from .frobenius import build_frobenius_chart, chart_invertibility_report, leaf_sample, tangency_residual
from .geometry import adapted_frame_at, involutivity_residual
from .scenarios import BUILTIN_SCENARIOS, INVOLUTIVE_BUILTINS, get_scenario, probe_points
from .transport import integrate_geodesic, jacobi_field_ode, parallel_transport, variation_jacobi_oracle

INVOLUTIVITY_FLAG_TOL = 1e-8


def _fmt(x):
    return f"{float(x):.17g}"


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _write_report(outdir, scenario, command, records, extra=None):
    report = {
        "artifact_version": __version__,
        "command": command,
        "scenario": scenario.name,
        "seed": scenario.numerics.seed,
        "numerics": {
            "h": scenario.numerics.h,
            "h_grid": scenario.numerics.h_grid,
            "delta": scenario.numerics.delta,
            "eps": scenario.numerics.eps,
            "m": scenario.numerics.m,
        },
        "checks": records,
        "passed": all(r["passed"] for r in records),
    }
    if extra:
        report.update(extra)
    path = Path(outdir) / f"{scenario.name}_{command.replace('-', '_')}_report.json"
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(report, handle, sort_keys=True, indent=2)
        handle.write("\n")
    return report, path


def _coord_header(n, prefix="x"):
    return [f"{prefix}{k + 1}" for k in range(n)]


def cmd_check_involutive(scenario, outdir):
    g, E = scenario.g, scenario.E
    pts = np.vstack([scenario.center[None], probe_points(scenario, 20)])
    rows = []
    records = []
    for idx, p in enumerate(pts):
        resid = involutivity_residual(g, E, p)
        rows.append([idx] + list(p) + [resid])
        label = "center" if idx == 0 else f"probe {idx}"
        records.append(
            {
                "id": "involutivity_residual",
                "scenario": scenario.name,
                "probe": label,
                "value": float(resid),
                "threshold": INVOLUTIVITY_FLAG_TOL,
                "comparison": "<=",
                "passed": bool(resid <= INVOLUTIVITY_FLAG_TOL),
            }
        )
    _write_csv(
        Path(outdir) / f"{scenario.name}_involutivity.csv",
        ["probe"] + _coord_header(g.n) + ["residual"],
        rows,
    )
    involutive = all(r["passed"] for r in records)
    report, path = _write_report(
        outdir, scenario, "check-involutive", records, extra={"involutive": involutive}
    )
    flag = "involutive" if involutive else "NON-involutive"
    print(f"{scenario.name}: {flag} (max residual {max(r['value'] for r in records):.3e})")
    print(f"report: {path}")
    return 0


def cmd_connection(scenario, outdir, n_probes=5):
    g, E = scenario.g, scenario.E
    pts = probe_points(scenario, n_probes)
    n = g.n
    gamma_rows, torsion_rows, curv_rows, probe_rows = [], [], [], []
    for idx, p in enumerate(pts):
        probe_rows.append([idx] + list(p))
        lc = levi_civita_at(g, p)
        can = canonical_at(g, E, p)
        tor = torsion_at(g, E, p)
        curv = curvature_at(g, E, p)
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    gamma_rows.append([idx, "levi_civita", k, i, j, lc.gamma[k, i, j]])
                    gamma_rows.append([idx, "canonical", k, i, j, can.gamma[k, i, j]])
                    if tor.components[k, i, j] != 0.0 or i < j:
                        torsion_rows.append([idx, k, i, j, tor.components[k, i, j]])
        for l in range(n):
            for k in range(n):
                for i in range(n):
                    for j in range(n):
                        if curv.components[l, k, i, j] != 0.0:
                            curv_rows.append([idx, l, k, i, j, curv.components[l, k, i, j]])
    base = Path(outdir) / scenario.name
    _write_csv(Path(f"{base}_probes.csv"), ["probe"] + _coord_header(n), probe_rows)
    _write_csv(Path(f"{base}_christoffel.csv"), ["probe", "kind", "k", "i", "j", "value"], gamma_rows)
    _write_csv(Path(f"{base}_torsion.csv"), ["probe", "k", "i", "j", "value"], torsion_rows)
    _write_csv(Path(f"{base}_curvature.csv"), ["probe", "l", "k", "i", "j", "value"], curv_rows)
    records = checks.check_compatibility_recovery(scenario, n_probes=50)
    _, path = _write_report(outdir, scenario, "connection", records)
    print(f"wrote christoffel/torsion/curvature tables for {n_probes} probes")
    print(f"report: {path}")
    return 0


def cmd_compare(scenario, outdir, n_probes=20):
    g, E = scenario.g, scenario.E
    pts = probe_points(scenario, n_probes)
    rows = []
    for idx, p in enumerate(pts):
        can = canonical_at(g, E, p)
        svk = schouten_van_kampen_christoffels(g, E, p)
        vr = vranceanu_christoffels(g, E, p)
        d_svk = float(np.abs(can.gamma - svk.gamma).max())
        d_vr = float(np.abs(can.gamma - vr.gamma).max())
        rows.append([idx] + list(p) + [d_svk, d_vr])
    _write_csv(
        Path(outdir) / f"{scenario.name}_compare.csv",
        ["probe"] + _coord_header(g.n) + ["max_abs_diff_svk", "max_abs_diff_vranceanu"],
        rows,
    )
    records = checks.check_bott_identity(scenario, n_probes=50)
    records += checks.check_comparison_differences(scenario)
    _, path = _write_report(outdir, scenario, "compare", records)
    for r in records:
        print(f"{'PASS' if r['passed'] else 'FAIL'} {r['id']}: {r['value']:.6e} ({r['comparison']} {r['threshold']:g})")
    print(f"report: {path}")
    return 0 if all(r["passed"] for r in records) else 1


def _reference_geodesic(scenario):
    p0, vs = checks._center_tangent_directions(scenario, 1)
    return integrate_geodesic(scenario.g, scenario.E, p0, vs[0], T=1.0, h=scenario.numerics.h)


def cmd_geodesic(scenario, outdir):
    traj = _reference_geodesic(scenario)
    n = scenario.g.n
    rows = [
        [t] + list(q) + list(v)
        for t, q, v in zip(traj.times, traj.points, traj.velocities)
    ]
    _write_csv(
        Path(outdir) / f"{scenario.name}_geodesic.csv",
        ["t"] + _coord_header(n) + _coord_header(n, "v"),
        rows,
    )
    records = checks.check_curve_lemma(scenario, n_velocities=5)
    _, path = _write_report(outdir, scenario, "geodesic", records)
    print(f"integrated reference geodesic: {len(traj.times)} samples")
    print(f"report: {path}")
    return 0 if all(r["passed"] for r in records) else 1


def cmd_transport(scenario, outdir):
    g, E = scenario.g, scenario.E
    traj = _reference_geodesic(scenario)
    frame = adapted_frame_at(g, E, traj.points[0])
    state = parallel_transport(g, E, traj, frame.vectors)
    n = g.n
    header = ["t"] + _coord_header(n) + _coord_header(n, "v")
    for c in range(n):
        header += [f"V{c + 1}_{k + 1}" for k in range(n)]
    rows = []
    for k, t in enumerate(traj.times):
        row = [t] + list(traj.points[k]) + list(traj.velocities[k])
        for c in range(n):
            row += list(state.vectors[k][:, c])
        rows.append(row)
    _write_csv(Path(outdir) / f"{scenario.name}_transport.csv", header, rows)
    records = checks.check_curve_lemma(scenario, n_velocities=5)[1:]
    _, path = _write_report(outdir, scenario, "transport", records)
    print(f"transported adapted frame along reference geodesic")
    print(f"report: {path}")
    return 0 if all(r["passed"] for r in records) else 1


def cmd_jacobi(scenario, outdir):
    g, E = scenario.g, scenario.E
    num = scenario.numerics
    p0, vs = checks._center_tangent_directions(scenario, 1, seed_shift=4)
    X = vs[0]
    rng = np.random.default_rng(num.seed + 5)
    Y = rng.normal(size=g.n)
    Y *= 0.2 / np.sqrt(Y @ Y)
    traj = integrate_geodesic(g, E, p0, X, T=1.0, h=num.h)
    state = jacobi_field_ode(g, E, traj, np.zeros(g.n), Y)
    rows = []
    worst = 0.0
    for t in (0.25, 0.5, 1.0):
        idx = traj.sample_index(t)
        oracle = variation_jacobi_oracle(g, E, p0, X, Y, t, h=num.h_grid)
        ode = state.vectors[idx]
        rel = float(np.linalg.norm(ode - oracle) / max(np.linalg.norm(oracle), 1e-30))
        worst = max(worst, rel)
        rows.append([t] + list(ode) + list(oracle) + [rel])
    n = g.n
    header = ["t"] + [f"J_ode_{k+1}" for k in range(n)] + [f"J_oracle_{k+1}" for k in range(n)] + ["rel_error"]
    _write_csv(Path(outdir) / f"{scenario.name}_jacobi.csv", header, rows)
    records = [
        {
            "id": "jacobi_oracle",
            "scenario": scenario.name,
            "probe": "t in {0.25, 0.5, 1.0}",
            "value": worst,
            "threshold": checks._tol(scenario, "jacobi_oracle"),
            "comparison": "<=",
            "passed": bool(worst <= checks._tol(scenario, "jacobi_oracle")),
        }
    ]
    _, path = _write_report(outdir, scenario, "jacobi", records)
    print(f"jacobi ODE vs variation oracle: worst relative error {worst:.3e}")
    print(f"report: {path}")
    return 0 if records[0]["passed"] else 1


def cmd_leaf(scenario, outdir, warn_only=False):
    g, E = scenario.g, scenario.E
    num = scenario.numerics
    leaf = leaf_sample(
        g, E, scenario.center, extent=num.eps, m=num.m, step=num.h_grid, warn_only=warn_only
    )
    r = E.r
    rows = [
        list(leaf.params[k]) + list(leaf.points[k]) + [leaf.residuals[k]]
        for k in range(len(leaf.points))
    ]
    _write_csv(
        Path(outdir) / f"{scenario.name}_leaf.csv",
        _coord_header(r, "t") + _coord_header(g.n) + ["residual"],
        rows,
    )
    worst = float(np.max(leaf.residuals))
    records = [
        {
            "id": "leaf_tangency",
            "scenario": scenario.name,
            "probe": f"eps={num.eps:g}, m={num.m}",
            "value": worst,
            "threshold": checks._tol(scenario, "chart_tangency"),
            "comparison": "<=",
            "passed": bool(worst <= checks._tol(scenario, "chart_tangency")),
        }
    ]
    _, path = _write_report(outdir, scenario, "leaf", records)
    print(f"sampled {len(leaf.points)} leaf points, max tangency residual {worst:.3e}")
    print(f"report: {path}")
    return 0


def cmd_chart(scenario, outdir):
    g, E = scenario.g, scenario.E
    num = scenario.numerics
    chart = build_frobenius_chart(
        g, E, scenario.center, delta=num.delta, m=num.m, step=num.h_grid
    )
    res = tangency_residual(g, E, chart, chart.grid_params)
    rows = [
        list(chart.grid_params[k]) + list(chart.grid_points[k]) + [res[k]]
        for k in range(len(res))
    ]
    _write_csv(
        Path(outdir) / f"{scenario.name}_chart.csv",
        _coord_header(g.n, "param") + _coord_header(g.n) + ["residual"],
        rows,
    )
    cond, sign = chart_invertibility_report(chart, np.zeros(g.n))
    worst = float(np.max(res))
    tol = checks._tol(scenario, "chart_tangency")
    records = [
        {
            "id": "chart_tangency",
            "scenario": scenario.name,
            "probe": f"delta={num.delta:g}, m={num.m}",
            "value": worst,
            "threshold": tol,
            "comparison": "<=",
            "passed": bool(worst <= tol),
        },
        {
            "id": "chart_condition_at_zero",
            "scenario": scenario.name,
            "probe": "x=0",
            "value": float(cond),
            "threshold": 10.0,
            "comparison": "<=",
            "passed": bool(cond <= 10.0),
        },
    ]
    _, path = _write_report(
        outdir, scenario, "chart", records, extra={"jacobian_sign_at_zero": sign}
    )
    print(f"chart grid {len(res)} points, max tangency residual {worst:.6e}")
    print(f"report: {path}")
    return 0 if all(r["passed"] for r in records) else 1


def verify_records(scenario):
    """The per-scenario invariant battery used by the verify subcommand."""
    name = scenario.name
    records = []
    records += checks.check_torsion_conditions(scenario, n_probes=100, draws=2)
    records += checks.check_compatibility_recovery(scenario, n_probes=100)
    records += checks.check_blend_affine(scenario, n_probes=25)
    records += checks.check_bott_identity(scenario, n_probes=25)
    records += checks.check_convergence(scenario)
    if name == "full_tm":
        records += checks.check_reduction(scenario, n_probes=50)
    involutive = scenario.config.involutive
    if involutive:
        records += checks.check_total_geodesy(scenario, n_probes=100)
        records += checks.check_curve_lemma(scenario, n_velocities=5)
        records += checks.check_jacobi(scenario)
        records += checks.check_chart(scenario, delta=scenario.numerics.delta, m=scenario.numerics.m)
    if name == "sphere_foliation":
        records += checks.check_sphere_leaf(scenario)
    if name == "contact3d":
        records += checks.check_negative_control(scenario)
    if name == "twisted4d":
        records += checks.check_comparison_differences(scenario)
    elif name == "warped_product":
        records += [r for r in checks.check_comparison_differences(scenario) if r["id"] == "vranceanu_difference"]
    return records


def cmd_verify(scenario, outdir):
    records = verify_records(scenario)
    _, path = _write_report(outdir, scenario, "verify", records)
    for r in records:
        flag = "PASS" if r["passed"] else "FAIL"
        print(f"{flag} {r['id']:<24} {r['value']:.6e} ({r['comparison']} {r['threshold']:g})  [{r['probe']}]")
    ok = all(r["passed"] for r in records)
    print(f"report: {path}")
    print("verify:", "all checks passed" if ok else "FAILURES present")
    return 0 if ok else 1


COMMANDS = {
    "check-involutive": cmd_check_involutive,
    "connection": cmd_connection,
    "compare": cmd_compare,
    "geodesic": cmd_geodesic,
    "transport": cmd_transport,
    "jacobi": cmd_jacobi,
    "leaf": cmd_leaf,
    "chart": cmd_chart,
    "verify": cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="foliage",
        description="Adapted connections, transport and Frobenius charts for metric distributions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument(
            "--scenario",
            required=True,
            help=f"built-in name ({', '.join(BUILTIN_SCENARIOS)}) or path to a JSON config",
        )
        p.add_argument("--out", default="out", help="output directory (default ./out)")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--step", type=float, default=None, help="override the integrator step h")
        if name == "leaf":
            p.add_argument(
                "--warn-only",
                action="store_true",
                help="sample the leaf even when the distribution is not involutive",
            )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        scenario = get_scenario(args.scenario, seed=args.seed, step=args.step)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        handler = COMMANDS[args.command]
        if args.command == "leaf":
            return handler(scenario, outdir, warn_only=args.warn_only)
        return handler(scenario, outdir)
    except FoliageError as ex:
        print(f"error [{args.scenario}/{args.command}]: {ex}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``smlab SUBCOMMAND [options]``.

Every output is a pure function of the arguments and the configuration
(no clocks, no random numbers), so two runs write identical files.
"""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .approx import extract_exits, verify
from .ctraj import build
from .io import Manifest, write_csv, write_json
from .katriel import (
    acceptance_model,
    chi,
    decay_fit,
    delta,
    delta_direct,
    lemma_rho_star,
    mu_star,
    periodic_ctraj,
    periodic_orbit,
    reduce,
    vbar_from_w,
    vbar_path,
)
from .props import default_suite, render_table
from .scenarios import RETARD6BIS_EPS, ConfigError, Scenario, builtin, cisim_initial_logs, load_config
from .sim import SmParams, Trajectory, integrate

FIGURES = ("retard5", "retard10", "retard5bis", "retard6bis", "cisim", "katriel", "retard4", "retard4bis")

# extra abscissa integrated past t_end so the halo-sensitivity runs can report
# where each trajectory eventually leaves the axis
CISIM_EXTRA = 3.0


class ScenarioFailure(RuntimeError):
    pass


# ---------------------------------------------------------------- helpers


def _initial_conditions(sc: Scenario, p: SmParams) -> list[tuple[str, float, tuple | None]]:
    if sc.y0:
        return [(f"{i}", y, None) for i, y in enumerate(sc.y0)] if len(sc.y0) > 1 else [("", sc.y0[0], None)]
    # no explicit y0: the nine near-axis starts of the halo-sensitivity setup
    return [(f"k{k}", 0.0, lg) for k, lg in enumerate(cisim_initial_logs(p), start=1)]


def _run_one(args) -> Trajectory:
    sc, y0, y0_log, t_end = args
    try:
        return integrate(sc.params, sc.f, sc.x0, y0, t_end, sc.options, y0_log=y0_log)
    except Exception as exc:  # re-raised with the scenario name
        raise ScenarioFailure(f"scenario {sc.name!r}, y0={y0!r}: {exc}") from exc


def _simulate(sc: Scenario, jobs: int, t_end: float | None = None) -> list[tuple[str, Trajectory]]:
    p = sc.params
    ics = _initial_conditions(sc, p)
    tasks = [(sc, y0, lg, t_end or sc.t_end) for _, y0, lg in ics]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as ex:
            trs = list(ex.map(_run_one, tasks))
    else:
        trs = [_run_one(t) for t in tasks]
    return [(label, tr) for (label, _, _), tr in zip(ics, trs)]


def _stem(base: str, label: str) -> str:
    return f"{base}_{label}" if label else base


def _observed_level(f, rho, e) -> float | None:
    if e.x_exit is None or e.side_out is None:
        return None
    if e.side_out == e.side_in:
        return 0.0
    phi = f.integrate(e.x_entry, e.x_exit)
    return 2 * rho if phi < 0 else -2 * rho


def _write_exits(path, sc: Scenario, tr: Trajectory):
    f = sc.f
    rows = []
    for e in extract_exits(tr, sc.kappa, f):
        rows.append([e.x_entry, e.x_exit, _observed_level(f, sc.params.rho, e), e.side_in, e.side_out])
    return write_csv(path, ["x_entry", "x_exit", "level", "side_in", "side_out"], rows)


def _write_predicted(path, ct):
    rows = [[e.x_entry, e.S if e.resolved else None, e.level, e.entry_side, e.exit_side] for e in ct.exits()]
    return write_csv(path, ["x_entry", "x_exit", "level", "side_in", "side_out"], rows)


def _write_lens(path, tr: Trajectory):
    rows = zip(tr.t, tr.x, tr.z, tr.lnabs, tr.chart)
    return write_csv(path, ["t", "x", "z", "ln_abs_y", "chart"], rows)


def _truncate(tr: Trajectory, t_max: float) -> Trajectory:
    keep = tr.t <= t_max + 1e-12
    events = [e for e in tr.events if e.t <= t_max + 1e-12]
    return replace(tr, t=tr.t[keep], x=tr.x[keep], lnabs=tr.lnabs[keep], sign=tr.sign[keep], chart=tr.chart[keep], events=events)


def _scenario_outputs(sc: Scenario, out: Path, man: Manifest, jobs: int, kinds=None) -> dict:
    """Write the requested outputs of one scenario; return a summary."""
    kinds = tuple(kinds or sc.outputs)
    summary: dict = {"eps": sc.eps, "rho": sc.params.rho, "x0": sc.x0, "t_end": sc.t_end}
    ct = None
    if "ctraj" in kinds or "verify" in kinds:
        if len(sc.y0) == 1 and sc.params.rho < 0:
            ct = build(sc.f, sc.params.rho, sc.x0, sc.y0[0], sc.x_max)
    if "ctraj" in kinds and ct is not None:
        ct.to_csv(out / f"{sc.name}_ctraj.csv")
        man.add(out / f"{sc.name}_ctraj.csv")
        man.add(_write_predicted(out / f"{sc.name}_exits_predicted.csv", ct))
        summary["predicted_exits"] = [[e.x_entry, e.S, e.level] for e in ct.exits()]
    if not {"trajectory", "exits", "lens", "verify"} & set(kinds):
        return summary
    runs = _simulate(sc, jobs)
    for label, tr in runs:
        stem = _stem(sc.name, label)
        if "trajectory" in kinds:
            tr.to_csv(out / f"{stem}_trajectory.csv")
            man.add(out / f"{stem}_trajectory.csv")
            tr.events_to_csv(out / f"{stem}_events.csv")
            man.add(out / f"{stem}_events.csv")
        if "exits" in kinds:
            man.add(_write_exits(out / f"{stem}_exits.csv", sc, tr))
        if "lens" in kinds:
            man.add(_write_lens(out / f"{stem}_lens.csv", tr))
        if "verify" in kinds and ct is not None:
            rep = verify(tr, ct, tol=sc.tol, kappa=sc.kappa)
            man.add(write_json(out / f"{stem}_report.json", rep.to_dict()))
            summary["frechet"] = rep.frechet
            summary["pass"] = rep.passed
    return summary


# ------------------------------------------------------------ scenarios


def _selected(args) -> list[Scenario]:
    if args.config:
        scs = load_config(args.config)
        if args.scenario:
            wanted = set(args.scenario)
            scs = [s for s in scs if s.name in wanted]
            missing = wanted - {s.name for s in scs}
            if missing:
                raise ConfigError(f"{args.config}: no scenario named {sorted(missing)}")
    else:
        if not args.scenario:
            raise ConfigError("name a built-in scenario or pass --config PATH")
        scs = [builtin(n) for n in args.scenario]
    return [s.with_overrides(eps=args.eps, rho=args.rho, tol=args.tol) for s in scs]


def cmd_simulate(args, out, man):
    for sc in _selected(args):
        man.summary[sc.name] = _scenario_outputs(sc, out, man, args.jobs, ("trajectory",))
    return 0


def cmd_ctraj(args, out, man):
    for sc in _selected(args):
        man.summary[sc.name] = _scenario_outputs(sc, out, man, args.jobs, ("ctraj",))
    return 0


def cmd_exits(args, out, man):
    for sc in _selected(args):
        man.summary[sc.name] = _scenario_outputs(sc, out, man, args.jobs, ("ctraj", "exits"))
    return 0


def cmd_lens_view(args, out, man):
    for sc in _selected(args):
        man.summary[sc.name] = _scenario_outputs(sc, out, man, args.jobs, ("lens",))
    return 0


def cmd_verify(args, out, man):
    status = 0
    lines = [f"{'scenario':16s} {'frechet':>10s} {'tol':>6s}  result"]
    for sc in _selected(args):
        s = _scenario_outputs(sc, out, man, args.jobs, ("verify",))
        man.summary[sc.name] = s
        if "frechet" not in s:
            lines.append(f"{sc.name:16s} {'-':>10s} {sc.tol:6.3f}  skipped (needs one y0 and rho < 0)")
            continue
        ok = s["pass"]
        status |= 0 if ok else 1
        lines.append(f"{sc.name:16s} {s['frechet']:10.4f} {sc.tol:6.3f}  {'pass' if ok else 'FAIL'}")
    print("\n".join(lines))
    return status


# -------------------------------------------------------------- katriel


def _mu_grid(lo, hi, n):
    return [float(v) for v in np.geomspace(lo, hi, n)]


def cmd_katriel_sweep(args, out, man):
    rows = []
    for nu in args.nu:
        base = acceptance_model(nu)
        for mu in _mu_grid(args.mu_min, args.mu_max, args.points):
            m = base.with_mu(mu)
            row = [nu, mu, nu * math.log(2 * mu), delta(m)]
            if args.direct:
                row.append(delta_direct(m))
            rows.append(row)
    header = ["nu", "mu", "rho", "delta"] + (["delta_direct"] if args.direct else [])
    man.add(write_csv(out / "katriel_sweep.csv", header, rows))
    man.summary["chi"] = chi(acceptance_model())
    return 0


def cmd_katriel_threshold(args, out, man):
    results = []
    for nu in args.nu:
        results.append(mu_star(acceptance_model(nu), workers=args.jobs if args.jobs > 1 else None))
    rows = [[r.nu, r.mu_star, r.ln_mu_star, r.evaluations, r.sign_changes] for r in results]
    man.add(write_csv(out / "katriel_threshold.csv", ["nu", "mu_star", "ln_mu_star", "evaluations", "sign_changes"], rows))
    for r in results:
        print(f"nu={r.nu:<8g} mu*={r.mu_star:.6e}  ln mu*={r.ln_mu_star:.4f}")
    if len(results) >= 3:
        slope, icpt, res = decay_fit([r.nu for r in results], [r.mu_star for r in results])
        man.summary["fit"] = {"slope": slope, "intercept": icpt, "max_residual": res}
        print(f"ln mu* = {slope:.4f}/nu + {icpt:.4f}   max residual {res:.3f}")
        man.add(write_json(out / "katriel_fit.json", man.summary["fit"]))
    return 0


def _katriel_figure(out: Path, man: Manifest, nu=0.1, mu=0.01):
    model = acceptance_model(nu, mu)
    s = np.linspace(0.0, 2 * math.pi, 1257)
    man.add(write_csv(out / "katriel_rates.csv", ["s", "r1", "r2", "d"], zip(s, model.r1.evaluate(s), model.r2.evaluate(s), (model.r1 - model.r2).evaluate(s))))
    p, f = reduce(model)
    orb = periodic_orbit(p, f)
    tr = orb.trajectory
    man.add(write_csv(out / "katriel_orbit.csv", ["s", "w", "z", "chart"], zip(tr.x, tr.y_plot, tr.z, tr.chart)))
    v = vbar_path(model, float(vbar_from_w(orb.y0, mu)), s)
    man.add(write_csv(out / "katriel_vbar.csv", ["s", "vbar"], zip(s, v)))
    ct = periodic_ctraj(f, p.rho)
    ct.to_csv(out / "katriel_ctraj.csv")
    man.add(out / "katriel_ctraj.csv")
    rows = []
    for m_ in _mu_grid(1e-4, 1.0, 25):
        rows.append([m_, nu * math.log(2 * m_), delta(model.with_mu(m_))])
    man.add(write_csv(out / "katriel_delta_scan.csv", ["mu", "rho", "delta"], rows))
    m1, m2 = model.means
    return {
        "nu": nu,
        "mu": mu,
        "chi": chi(model),
        "mean_r1": m1,
        "mean_r2": m2,
        "delta": delta(model, orb),
        "rho_star": lemma_rho_star(f),
        "orbit_log_multiplier": orb.log_multiplier,
    }


# -------------------------------------------------------------- figures


def _cisim_figure(out: Path, man: Manifest, jobs: int, sc: Scenario) -> dict:
    p = sc.params
    f = sc.f
    runs = _simulate(sc, jobs, t_end=sc.t_end + CISIM_EXTRA)
    rows = []
    for k, (label, tr) in enumerate(runs, start=1):
        short = _truncate(tr, sc.t_end)
        short.to_csv(out / f"cisim_{label}_trajectory.csv")
        man.add(out / f"cisim_{label}_trajectory.csv")
        man.add(_write_lens(out / f"cisim_{label}_lens.csv", short))
        exits = [e for e in extract_exits(tr, sc.kappa, f) if e.x_exit is not None]
        first = exits[0] if exits else None
        x_exit = first.x_exit if first else None
        rows.append([k, float(tr.z[0]), x_exit, first.side_out if first else None, x_exit is not None and x_exit <= sc.x_max])
    man.add(write_csv(out / "cisim_exit_order.csv", ["k", "z0", "x_exit", "side_out", "exited_by_t_end"], rows))
    xs = [r[2] for r in rows]
    mono = all(a is not None and b is not None and a > b for a, b in zip(xs, xs[1:]))
    return {"eps": sc.eps, "rho": p.rho, "exited": sum(1 for r in rows if r[4]), "exit_monotone_in_z0": mono}


def cmd_figure(args, out, man):
    name = args.name
    if name == "katriel":
        man.summary["katriel"] = _katriel_figure(out, man)
        return 0
    sc = builtin(name).with_overrides(eps=args.eps, rho=args.rho, tol=args.tol)
    if name == "cisim":
        man.summary["cisim"] = _cisim_figure(out, man, args.jobs, sc)
        return 0
    if name == "retard6bis" and args.eps is None:
        for eps in RETARD6BIS_EPS:
            sub = replace(sc, name=f"retard6bis_eps{eps:g}", eps=eps)
            man.summary[sub.name] = _scenario_outputs(sub, out, man, args.jobs)
        return 0
    man.summary[name] = _scenario_outputs(sc, out, man, args.jobs)
    return 0


def cmd_props(args, out, man):
    eps_values = [args.eps] if args.eps is not None else [0.01, 0.005]
    status = 0
    allrep = []
    for eps in eps_values:
        reps = default_suite(eps)
        print(f"eps = {eps:g}")
        print(render_table(reps))
        status |= 0 if all(r.passed for r in reps) else 1
        allrep.extend({"eps": eps, **r.to_dict()} for r in reps)
    man.add(write_json(out / "props.json", allrep))
    man.summary["pass"] = status == 0
    return status


# ----------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI file with [scenario NAME] sections")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory (default: out)")
    common.add_argument("--eps", type=float, help="override eps")
    common.add_argument("--rho", type=float, help="override rho")
    common.add_argument("--tol", type=float, help="override the shadowing tolerance")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for batches (default 1)")
    common.add_argument("--seedless", action="store_true", help="accepted for scripts; nothing here is random")

    ap = argparse.ArgumentParser(prog="smlab", description="Slow-fast lab: simulation, C-trajectories and checks.")
    ap.add_argument("--version", action="version", version=f"smlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    for name, fn, hlp in (
        ("simulate", cmd_simulate, "integrate scenarios, write trajectory CSVs"),
        ("ctraj", cmd_ctraj, "build C-trajectories"),
        ("verify", cmd_verify, "shadowing report against the C-trajectory"),
        ("exits", cmd_exits, "observed and predicted axis exits"),
        ("lens-view", cmd_lens_view, "trajectories in the lens coordinate z"),
    ):
        sp = sub.add_parser(name, parents=[common], help=hlp)
        sp.add_argument("scenario", nargs="*", help="built-in names, or a subset of the config's scenarios")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("katriel-sweep", parents=[common], help="growth exponent over a migration-rate grid")
    sp.add_argument("--nu", type=float, nargs="+", default=[0.1])
    sp.add_argument("--mu-min", type=float, default=1e-4)
    sp.add_argument("--mu-max", type=float, default=1.0)
    sp.add_argument("--points", type=int, default=13)
    sp.add_argument("--direct", action="store_true", help="also integrate the population system directly")
    sp.set_defaults(func=cmd_katriel_sweep)

    sp = sub.add_parser("katriel-threshold", parents=[common], help="inflation threshold mu* per nu and its decay fit")
    sp.add_argument("--nu", type=float, nargs="+", default=[0.1, 0.05, 0.02])
    sp.set_defaults(func=cmd_katriel_threshold)

    sp = sub.add_parser("props", parents=[common], help="run the comparison-lemma checks")
    sp.set_defaults(func=cmd_props)

    sp = sub.add_parser("figure", parents=[common], help="datasets behind a named figure")
    sp.add_argument("name", choices=FIGURES)
    sp.set_defaults(func=cmd_figure)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    man = Manifest(out, args.command)
    try:
        status = args.func(args, out, man)
    except ConfigError as exc:
        print(f"smlab: config error: {exc}", file=sys.stderr)
        return 2
    except ScenarioFailure as exc:
        print(f"smlab: {exc}", file=sys.stderr)
        return 3
    man.write()
    return status


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end: orchestration and artifact emission.

Verbs: ``solve`` evolves the configured data and writes trajectory
files, ``formbound`` estimates drift form bounds per mollification
level, ``verify`` runs the configured check suite into a CSV ledger,
``constants`` prints the closed-form constant table, ``counterexample``
propagates the explicit non-uniqueness solution, ``plotdata`` turns a
ledger or trajectory file into plain plot data plus a rendered figure.

The exit code is 0 exactly when every executed check passed.  All
randomness flows from the config seed, and repeated runs of the same
config produce byte-identical ledgers.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import constants
from .checks import (
    LEDGER_HEADER,
    LEDGER_VERSION,
    CheckReport,
    SpaceTimeBump,
    apriori_ratio,
    cauchy_matrix,
    cauchy_trend,
    check_composition,
    check_contraction,
    check_continuity,
    check_positivity,
    composition_refinement,
    counterexample_check,
    iteration_inequality_check,
    ledger_row,
    lp_ratio,
    supnorm_decay,
    weak_residual,
)
from .config import (
    ConfigError,
    build_field,
    build_grid_from,
    initial_values,
    load_config,
)
from .formbound import estimate_beta
from .grids import RadialGrid
from .mollify import MollifierBank
from .solver import evolve, load_trajectory, lp_norm, save_trajectory

__all__ = ["main", "run_suite", "emit_plot_data"]

PLOT_KINDS = ("norm_vs_time", "beta_vs_eps", "cauchy_heatmap", "decay_vs_t0")


def _skip_row(name, cause):
    text = str(cause).replace(",", ";").replace("\n", " ")
    return f"{LEDGER_VERSION},{name},,,,0,skipped={text}"


def _tag(report, **extra):
    """Return the report with extra descriptor entries merged in."""
    return dataclasses.replace(
        report, descriptor={**report.descriptor, **extra}
    )


class _SuiteContext:
    """Shared state for one suite run: grid, field, data, cached runs."""

    def __init__(self, cfg, seed):
        self.cfg = cfg
        self.grid = build_grid_from(cfg)
        self.field = build_field(cfg)
        self.f = initial_values(self.grid, cfg)
        self.info = self.field.known_form_bound()
        self.s = cfg.run["s"]
        self.t_end = cfg.run["t_end"]
        self.dt = cfg.run["dt"]
        self.m_list = cfg.run["m_list"]
        self.seed = seed
        self.runs = {}

    def bank(self, m):
        return MollifierBank(self.field, m)

    def run(self, m):
        if m not in self.runs:
            self.runs[m] = evolve(
                self.grid, self.bank(m), self.f, self.s, self.t_end, self.dt,
                store="all",
            )
        return self.runs[m]

    def known_beta(self):
        if self.info is None or self.info.beta is None:
            raise ValueError("drift has no usable form bound")
        return self.info.beta

    def lattice_point(self):
        """A composition split point strictly inside the window, on the dt lattice."""
        r = self.cfg.checks.get("composition_r")
        span = self.t_end - self.s
        if r is None:
            r = self.s + round((span / 2.0) / self.dt) * self.dt
        if not self.s < r < self.t_end:
            r = self.s + self.dt
        return r


def _check_jobs(name, ctx):
    """Zero-argument callables producing the reports for one check name."""
    cks = ctx.cfg.checks
    if name == "positivity":
        return [
            (lambda m=m: _tag(check_positivity(ctx.run(m)), m=m))
            for m in ctx.m_list
        ]
    if name == "contraction":
        return [
            (lambda m=m: _tag(check_contraction(ctx.run(m)), m=m))
            for m in ctx.m_list
        ]
    if name == "composition":
        r = ctx.lattice_point()
        return [
            (
                lambda m=m: _tag(
                    check_composition(
                        ctx.grid, ctx.bank(m), ctx.f, ctx.s, r, ctx.t_end, ctx.dt
                    ),
                    m=m,
                )
            )
            for m in ctx.m_list
        ]
    if name == "refinement":
        m = ctx.m_list[-1]
        return [
            lambda: _tag(
                composition_refinement(
                    ctx.grid, ctx.bank(m), ctx.f, ctx.s, ctx.t_end, ctx.dt
                ),
                m=m,
            )
        ]
    if name == "continuity":
        deltas = cks["continuity_deltas"]
        tol = cks["continuity_tol"]
        return [
            (
                lambda m=m: _tag(
                    check_continuity(ctx.grid, ctx.bank(m), ctx.f, ctx.s, deltas, tol),
                    m=m,
                )
            )
            for m in ctx.m_list
        ]
    if name == "weak":
        return [(lambda m=m: _weak_job(ctx, m)) for m in ctx.m_list]
    if name == "apriori":
        return [
            (
                lambda m=m: _tag(
                    apriori_ratio(
                        ctx.run(m), ctx.f, cks["apriori_q"], cks["apriori_alpha"],
                        ctx.s, ctx.t_end, ctx.known_beta(),
                    ),
                    m=m,
                )
            )
            for m in ctx.m_list
        ]
    if name == "lp":
        return [
            (
                lambda m=m: _tag(
                    lp_ratio(
                        ctx.run(m), ctx.f, cks["lp_p"], ctx.s, ctx.t_end,
                        ctx.known_beta(),
                    ),
                    m=m,
                )
            )
            for m in ctx.m_list
        ]
    if name == "iteration":
        def job():
            if len(ctx.m_list) < 2:
                raise ValueError("iteration check needs at least two levels")
            lo, hi = ctx.m_list[-2], ctx.m_list[-1]
            return iteration_inequality_check(
                ctx.run(lo), ctx.run(hi), cks["iteration_p"],
                cks["iteration_alpha"], cks["iteration_sigma_prime"],
                ctx.s, ctx.known_beta(), lo, hi,
            )
        return [job]
    if name == "cauchy":
        return [lambda: _cauchy_job(ctx)]
    if name == "formbound":
        return [(lambda m=m: _formbound_job(ctx, m)) for m in ctx.m_list]
    raise ValueError(f"unknown check '{name}'")


def _weak_job(ctx, m):
    if ctx.grid.kind != "radial":
        raise ValueError("weak residual check needs a radial grid")
    span = ctx.t_end - ctx.s
    psi = SpaceTimeBump(
        ctx.s + 0.25 * span, ctx.s + 0.75 * span,
        0.7 * ctx.grid.r_max, d=ctx.grid.d,
    )
    residual = weak_residual(ctx.run(m), psi, field=ctx.bank(m).field)
    bound = ctx.cfg.checks["weak_tol"]
    measured = abs(residual)
    return CheckReport(
        "weak", measured, bound, 0.0, measured <= bound,
        {"m": m, "residual": residual},
    )


def _cauchy_job(ctx):
    if len(ctx.m_list) < 2:
        raise ValueError("cauchy check needs at least two levels")
    norm = ctx.cfg.checks["cauchy_norm"]
    lattice = ctx.cfg.checks["cauchy_lattice"]
    matrix = cauchy_matrix(
        ctx.grid, ctx.bank, ctx.f, ctx.m_list, ctx.t_end - ctx.s, ctx.dt,
        norm=norm, lattice=lattice,
    )
    entries = "|".join(repr(float(v)) for v in np.asarray(matrix).ravel())
    levels = "|".join(str(m) for m in ctx.m_list)
    return _tag(cauchy_trend(matrix), norm=norm, levels=levels, entries=entries)


def _formbound_job(ctx, m):
    samples = ctx.bank(m).sample(ctx.grid, ctx.s)
    rep = estimate_beta(samples, ctx.grid, seed=ctx.seed)
    info = ctx.info
    if info is not None and info.beta is not None and info.g is None:
        bound = info.beta + 1.0 / m
    else:
        bound = None
    measured = float(rep.beta_hat)
    passed = True if bound is None else measured <= bound
    return CheckReport(
        "formbound", measured, bound, 0.0, passed,
        {
            "m": m,
            "eps": 1.0 / m,
            "iterations": rep.iterations,
            "converged": int(rep.converged),
        },
    )


def run_suite(cfg, out_dir=None, seed=None):
    """Execute the configured checks; returns (ledger path, all passed).

    Checks run in the configured order, each level's evolution computed
    once and shared.  A check that raises is recorded as a skip row with
    the cause and does not count against the exit status; a check that
    runs and fails does.  Trajectories actually computed are saved next
    to the ledger.
    """
    out = Path(out_dir if out_dir is not None else cfg.run["out"])
    out.mkdir(parents=True, exist_ok=True)
    if seed is None:
        seed = cfg.run["seed"]
    ctx = _SuiteContext(cfg, seed)
    rows = [LEDGER_HEADER]
    all_pass = True
    for name in cfg.checks["list"]:
        try:
            jobs = _check_jobs(name, ctx)
        except Exception as exc:
            rows.append(_skip_row(name, exc))
            continue
        for job in jobs:
            try:
                report = job()
            except Exception as exc:
                rows.append(_skip_row(name, exc))
                continue
            rows.append(ledger_row(report))
            all_pass = all_pass and report.passed
    for m, traj in ctx.runs.items():
        save_trajectory(traj, out / f"trajectory_m{m}.flab")
    ledger = out / "ledger.csv"
    ledger.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return ledger, all_pass


def _read_ledger(path):
    """Parse a ledger back into dict rows; descriptor values as floats when possible."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != LEDGER_HEADER:
        raise ValueError(f"{path} is not a ledger file")
    rows = []
    for line in lines[1:]:
        parts = line.split(",", 6)
        if len(parts) != 7:
            continue
        desc = {}
        for item in parts[6].split(";"):
            if "=" not in item:
                continue
            k, _, v = item.partition("=")
            try:
                desc[k] = float(v)
            except ValueError:
                desc[k] = v
        rows.append(
            {
                "name": parts[1],
                "measured": float(parts[2]) if parts[2] else None,
                "bound": float(parts[3]) if parts[3] else None,
                "passed": parts[5] == "1",
                "descriptor": desc,
            }
        )
    return rows


def _render_png(path, draw):
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    draw(ax)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def emit_plot_data(source, kind, out_dir=None):
    """Write ``<kind>.csv`` and ``<kind>.png`` from a ledger or trajectory.

    ``norm_vs_time`` reads a binary trajectory file; the other kinds
    read ledger rows and report an error when the rows they need are
    missing.  Returns the CSV path.
    """
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind '{kind}'")
    source = Path(source)
    out = Path(out_dir) if out_dir is not None else source.parent
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"{kind}.csv"
    png_path = out / f"{kind}.png"
    if kind == "norm_vs_time":
        traj = load_trajectory(source)
        sup = [float(np.max(np.abs(fr))) for fr in traj.frames]
        l2 = [float(lp_norm(fr, traj.grid, 2)) for fr in traj.frames]
        lines = ["# sup norm and L2 norm of the evolved state at each stored time"]
        lines.append("time,sup_norm,l2_norm")
        for t, a, b in zip(traj.times, sup, l2):
            lines.append(f"{float(t)!r},{a!r},{b!r}")
        csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

        def draw(ax):
            ax.plot(traj.times, sup, label="sup norm")
            ax.plot(traj.times, l2, label="L2 norm")
            ax.set_xlabel("time")
            ax.set_ylabel("norm")
            ax.legend()

        _render_png(png_path, draw)
        return csv_path

    rows = _read_ledger(source)
    if kind == "beta_vs_eps":
        picked = [
            (r["descriptor"]["eps"], r["measured"])
            for r in rows
            if r["name"] == "formbound" and "eps" in r["descriptor"]
        ]
        if not picked:
            raise ValueError("no formbound rows in the ledger")
        picked.sort(key=lambda p: -p[0])
        lines = ["# estimated form bound against the drift regularization scale"]
        lines.append("eps,beta_hat")
        for eps, beta in picked:
            lines.append(f"{eps!r},{beta!r}")
        csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

        def draw(ax):
            eps = [p[0] for p in picked]
            beta = [p[1] for p in picked]
            ax.semilogx(eps, beta, marker="o")
            ax.invert_xaxis()
            ax.set_xlabel("regularization scale")
            ax.set_ylabel("estimated form bound")

        _render_png(png_path, draw)
        return csv_path

    if kind == "cauchy_heatmap":
        row = next(
            (
                r
                for r in rows
                if r["name"] == "cauchy_trend" and "entries" in r["descriptor"]
            ),
            None,
        )
        if row is None:
            raise ValueError("no cauchy rows with matrix data in the ledger")
        levels = [int(float(v)) for v in str(row["descriptor"]["levels"]).split("|")]
        flat = [float(v) for v in str(row["descriptor"]["entries"]).split("|")]
        size = len(levels)
        matrix = np.asarray(flat).reshape(size, size)
        lines = ["# pairwise distance between evolutions at different mollification levels"]
        lines.append("level," + ",".join(str(m) for m in levels))
        for m, row_vals in zip(levels, matrix):
            lines.append(str(m) + "," + ",".join(repr(float(v)) for v in row_vals))
        csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

        def draw(ax):
            im = ax.imshow(matrix, origin="lower", cmap="viridis")
            ax.set_xticks(range(size), [str(m) for m in levels])
            ax.set_yticks(range(size), [str(m) for m in levels])
            ax.set_xlabel("level")
            ax.set_ylabel("level")
            ax.figure.colorbar(im, ax=ax, label="distance")

        _render_png(png_path, draw)
        return csv_path

    # decay_vs_t0
    row = next((r for r in rows if r["name"] == "counterexample_decay"), None)
    if row is None:
        raise ValueError("no counterexample decay row in the ledger")
    desc = row["descriptor"]
    kappa = float(desc["kappa"])
    alpha = float(desc["alpha"])
    d = int(float(desc.get("d", 3)))
    t0 = float(desc.get("t0", 0.1))
    probes = t0 * 0.5 ** np.arange(12)
    sups = [float(supnorm_decay(kappa, alpha, d, t)) for t in probes]
    lines = ["# initial-time sup norm of the explicit solution as t0 shrinks"]
    lines.append("t0,sup_norm")
    for t, v in zip(probes, sups):
        lines.append(f"{float(t)!r},{v!r}")
    csv_path.write_text("\n".join(lines) + "\n", encoding="utf-8")

    def draw(ax):
        ax.loglog(probes, sups, marker="o")
        ax.set_xlabel("t0")
        ax.set_ylabel("sup norm")

    _render_png(png_path, draw)
    return csv_path


def _constants_table():
    rows = ["name,value"]
    for q in (2, 3, 4, 5):
        rows.append(f"omega_{q},{constants.omega(q)!r}")
    for d in (3, 4, 5, 6):
        rows.append(f"beta_threshold_{d},{constants.beta_threshold(d)!r}")
    for beta in (0.04, 1.0):
        rows.append(f"lp_threshold_{beta!r},{constants.lp_threshold(beta)!r}")
    mp = constants.moser_params(0.04, 2.0, 1.25, 3)
    rows.append(f"moser_p1,{float(mp.p_seq[0])!r}")
    rows.append(f"moser_k,{float(mp.k)!r}")
    rows.append(f"moser_gamma_limit,{float(mp.gamma_inf_bound)!r}")
    rows.append(f"moser_gamma_bound,{float(mp.gamma_bound)!r}")
    return "\n".join(rows) + "\n"


def _cmd_solve(args):
    cfg = load_config(args.config)
    out = Path(args.out if args.out is not None else cfg.run["out"])
    out.mkdir(parents=True, exist_ok=True)
    ctx = _SuiteContext(cfg, args.seed if args.seed is not None else cfg.run["seed"])
    for m in ctx.m_list:
        traj = ctx.run(m)
        path = out / f"trajectory_m{m}.flab"
        save_trajectory(traj, path)
        print(f"{path} frames={len(traj)} final_sup={float(np.max(np.abs(traj.final)))!r}")
    return 0


def _cmd_formbound(args):
    cfg = load_config(args.config)
    out = Path(args.out if args.out is not None else cfg.run["out"])
    out.mkdir(parents=True, exist_ok=True)
    ctx = _SuiteContext(cfg, args.seed if args.seed is not None else cfg.run["seed"])
    lines = ["m,beta_hat,bound,iterations,converged"]
    ok = True
    for m in ctx.m_list:
        rep = _formbound_job(ctx, m)
        ok = ok and rep.passed
        bound = "" if rep.bound is None else repr(rep.bound)
        lines.append(
            f"{m},{rep.measured!r},{bound},"
            f"{rep.descriptor['iterations']},{rep.descriptor['converged']}"
        )
    path = out / "formbound.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(path)
    return 0 if ok else 1


def _cmd_verify(args):
    cfg = load_config(args.config)
    ledger, ok = run_suite(cfg, out_dir=args.out, seed=args.seed)
    print(ledger)
    return 0 if ok else 1


def _cmd_constants(args):
    table = _constants_table()
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "constants.csv"
        path.write_text(table, encoding="utf-8")
        print(path)
    else:
        sys.stdout.write(table)
    return 0


def _cmd_counterexample(args):
    kappa, alpha_exp, d = 2.0, 1.0, 3
    grid = RadialGrid(3, 12.0, 1024)
    t0, t1 = 0.1, 0.5
    if args.config is not None:
        cfg = load_config(args.config)
        if cfg.drift["kind"] == "log_counterexample":
            kappa = cfg.drift["kappa"]
            alpha_exp = cfg.drift["alpha_exp"]
        grid = build_grid_from(cfg)
        d = grid.d
    match, decay = counterexample_check(kappa, alpha_exp, d, grid, t0, t1)
    rows = [LEDGER_HEADER, ledger_row(match), ledger_row(decay)]
    text = "\n".join(rows) + "\n"
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "counterexample.csv"
        path.write_text(text, encoding="utf-8")
        print(path)
    sys.stdout.write(text)
    return 0 if (match.passed and decay.passed) else 1


def _cmd_plotdata(args):
    if args.source is None:
        print("plotdata needs --source (a ledger or trajectory file)", file=sys.stderr)
        return 2
    try:
        path = emit_plot_data(args.source, args.kind, out_dir=args.out)
    except (ValueError, OSError) as exc:
        print(f"plotdata: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="fellerlab",
        description="Evolution families with singular drifts: solve, check, report.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment config path")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument(
            "--threads", type=int, default=1,
            help="worker count (accepted for compatibility; execution is serial)",
        )

    common(sub.add_parser("solve", help="evolve and write trajectory files"))
    common(sub.add_parser("formbound", help="estimate form bounds per level"))
    common(sub.add_parser("verify", help="run the configured checks into a ledger"))
    common(sub.add_parser("constants", help="closed-form constant table"), False)
    common(sub.add_parser("counterexample", help="propagate the explicit solution"), False)
    plot = sub.add_parser("plotdata", help="plot data and figure from a ledger or trajectory")
    plot.add_argument("kind", choices=PLOT_KINDS)
    plot.add_argument("--source", default=None, help="ledger.csv or trajectory file")
    common(plot, False)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be >= 1")
    handlers = {
        "solve": _cmd_solve,
        "formbound": _cmd_formbound,
        "verify": _cmd_verify,
        "constants": _cmd_constants,
        "counterexample": _cmd_counterexample,
        "plotdata": _cmd_plotdata,
    }
    try:
        return handlers[args.verb](args)
    except ConfigError as exc:
        for violation in exc.violations:
            print(f"config: {violation}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

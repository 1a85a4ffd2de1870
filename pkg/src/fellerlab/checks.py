"""Measured pass/fail checks over solver runs.

Every check reduces to a ``CheckReport``: a named measured number, an
optional bound with explicit slack, and a verdict.  Reports are pure
functions of their inputs, so a fixed config and seed reproduce them
bit for bit.  ``ledger_row`` renders a report as a CSV line under a
versioned schema for the run ledgers.

The checks cover the structural properties of the evolution family
(composition, strong continuity, positivity with sup norm contraction),
the weak formulation residual, gradient and L^p a priori bounds, the
iteration inequality that drives convergence of the regularized flows,
the Cauchy trend across regularization levels, and the closed form
vanishing solution that exhibits non-uniqueness.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constants import lp_threshold, omega
from .drifts import explicit_solution, LogCounterexampleDrift, supnorm_decay
from .solver import (
    Trajectory,
    _mixed_quasi,
    evolve,
    gradient,
    lp_norm,
    mixed_norm,
    weighted_integral,
)

__all__ = [
    "CheckReport",
    "LEDGER_VERSION",
    "LEDGER_HEADER",
    "ledger_row",
    "ExactRadialDrift",
    "check_composition",
    "composition_refinement",
    "check_continuity",
    "check_positivity",
    "check_contraction",
    "SpaceTimeBump",
    "weak_residual",
    "apriori_ratio",
    "ratio_spread",
    "lp_ratio",
    "ITERATION_C0",
    "iteration_inequality_check",
    "cauchy_matrix",
    "cauchy_trend",
    "counterexample_check",
]

LEDGER_VERSION = 1
LEDGER_HEADER = "schema,name,measured,bound,slack,passed,descriptor"

# Constant in the iteration inequality, calibrated once on the (8, 16)
# reference pair (radial n=2048, r_max=8, scaled inverse-distance drift
# with form bound 0.04, data exp(-r^2), p=2.5, alpha=2/5, sigma'=1.25,
# window [0, 1] at dt=1/128) and frozen; the tests re-run the
# calibration and assert this literal sits just above the fit.
ITERATION_C0 = 3.0e-10


@dataclass(frozen=True)
class CheckReport:
    """One measured verdict; ``bound`` of ``None`` means trend only."""

    name: str
    measured: float
    bound: float | None
    slack: float
    passed: bool
    descriptor: dict

    def __post_init__(self):
        if self.bound is not None:
            expect = self.measured <= self.bound * (1.0 + self.slack)
            if self.passed != expect:
                raise ValueError("verdict inconsistent with bound and slack")


def _verdict(name, measured, bound, slack, descriptor):
    passed = True if bound is None else measured <= bound * (1.0 + slack)
    return CheckReport(name, float(measured), bound, float(slack), passed, descriptor)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def ledger_row(report):
    """Render a report as one CSV line of the versioned ledger schema."""
    desc = ";".join(f"{k}={_fmt(v)}" for k, v in sorted(report.descriptor.items()))
    return (
        f"{LEDGER_VERSION},{report.name},{_fmt(report.measured)},"
        f"{_fmt(report.bound)},{_fmt(report.slack)},{int(report.passed)},{desc}"
    )


class ExactRadialDrift:
    """Sample a field's radial coefficient directly at the nodes.

    Nodes where the coefficient is singular (in practice only the
    origin) take coefficient zero; the affected volume is a single cell,
    which vanishes under refinement.  Used where mollification error
    would mask the quantity under study.
    """

    def __init__(self, field):
        self.field = field
        self.time_dependent = field.time_dependent

    def sample(self, grid, t):
        if grid.kind != "radial":
            raise ValueError("exact sampling is radial only")
        prof = self.field.radial_profile(t, grid.radii, on_singular="inf")
        return np.where(np.isfinite(prof), prof, 0.0)


def _aligned(value, dt, anchor):
    steps = round((value - anchor) / dt)
    return abs(anchor + steps * dt - value) <= 1e-9


def check_composition(grid, drift, f, s, r, t, dt):
    """Defect of splitting the evolution at ``r``.

    With every milestone on the step lattice both paths apply the same
    step matrices in the same order, so the defect is zero up to the
    linear solver's residual; the bound is 1e-12 in sup norm.
    """
    if not s <= r <= t:
        raise ValueError("need s <= r <= t")
    if not (_aligned(r, dt, s) and _aligned(t, dt, s)):
        raise ValueError("milestones must sit on the step lattice")
    direct = evolve(grid, drift, f, s, t, dt, store="ends")
    first = evolve(grid, drift, f, s, r, dt, store="ends")
    second = evolve(grid, drift, first.final, r, t, dt, store="ends")
    measured = float(np.max(np.abs(direct.final - second.final)))
    return _verdict(
        "composition",
        measured,
        1e-12,
        0.0,
        {"s": s, "r": r, "t": t, "dt": dt, "grid": grid.kind},
    )


def composition_refinement(grid, drift, f, s, t, dt):
    """Step refinement ratio of the time freezing error.

    For time dependent drifts the scheme freezes coefficients per step;
    comparing against the half step run and halving again measures the
    first order error, whose ratio should sit near 2.  Trend only.
    """
    runs = [
        evolve(grid, drift, f, s, t, dt / k, store="ends").final for k in (1, 2, 4)
    ]
    coarse = float(np.max(np.abs(runs[0] - runs[1])))
    fine = float(np.max(np.abs(runs[1] - runs[2])))
    measured = coarse / fine if fine > 0 else np.inf
    return _verdict(
        "composition_refinement",
        measured,
        None,
        0.0,
        {"s": s, "t": t, "dt": dt, "coarse": coarse, "fine": fine},
    )


def check_continuity(grid, drift, f, s, deltas, tol=1e-2):
    """Sup norm of ``U(s + delta, s) f - f`` over shrinking ``delta``.

    Passes when the defects decrease monotonically and the smallest is
    below ``tol``; the full sequence rides along in the descriptor.
    """
    deltas = sorted(deltas, reverse=True)
    if len(deltas) < 2:
        raise ValueError("need at least two deltas")
    f = np.asarray(f, dtype=float)
    defects = []
    for delta in deltas:
        out = evolve(grid, drift, f, s, s + delta, delta, store="ends").final
        defects.append(float(np.max(np.abs(out - f))))
    decreasing = all(b < a for a, b in zip(defects, defects[1:]))
    measured = defects[-1]
    report = _verdict(
        "continuity",
        measured,
        tol if decreasing else 0.0,
        0.0,
        {"s": s, "deltas": tuple(deltas), "defects": tuple(defects)},
    )
    return report


def check_positivity(traj):
    """Most negative value over the whole trajectory; bound 1e-13."""
    measured = float(max(0.0, -np.min(traj.frames)))
    return _verdict(
        "positivity",
        measured,
        1e-13,
        0.0,
        {"grid": traj.grid.kind, "frames": len(traj)},
    )


def check_contraction(traj):
    """Largest per step sup norm growth factor; bound ``1 + 1e-12``."""
    sups = traj.sup_series()
    ratios = [
        b / a for a, b in zip(sups, sups[1:]) if a > 0.0
    ]
    measured = float(max(ratios)) if ratios else 1.0
    return _verdict(
        "contraction",
        measured,
        1.0 + 1e-12,
        0.0,
        {"grid": traj.grid.kind, "frames": len(traj)},
    )


class SpaceTimeBump:
    """Compactly supported test function with closed form derivatives.

    Product of polynomial bumps: ``(1 - u^2)^4`` in time over
    ``(t_lo, t_hi)`` and in radius over ``r < r_support``.  Smooth
    enough for second order quadrature, zero outside its box, with
    ``d/dt`` and the radial Laplacian available exactly.
    """

    def __init__(self, t_lo, t_hi, r_support, d=3):
        if not t_lo < t_hi:
            raise ValueError("empty time support")
        self.t_lo = float(t_lo)
        self.t_hi = float(t_hi)
        self.r_support = float(r_support)
        self.d = int(d)

    def _time_parts(self, t):
        u = (2.0 * t - (self.t_lo + self.t_hi)) / (self.t_hi - self.t_lo)
        if abs(u) >= 1.0:
            return 0.0, 0.0
        du = 2.0 / (self.t_hi - self.t_lo)
        val = (1.0 - u * u) ** 4
        der = 4.0 * (1.0 - u * u) ** 3 * (-2.0 * u) * du
        return val, der

    def _space_parts(self, r):
        rho = r / self.r_support
        inside = rho < 1.0
        q = np.where(inside, 1.0 - rho**2, 0.0)
        val = q**4
        # phi' = -8 r / R^2 q^3 ; lap = phi'' + (d-1)/r phi'
        lap = (
            -8.0 / self.r_support**2 * q**3 * self.d
            + 48.0 * r**2 / self.r_support**4 * q**2
        )
        return val, np.where(inside, lap, 0.0)

    def value(self, t, r):
        tv, _ = self._time_parts(t)
        sv, _ = self._space_parts(r)
        return tv * sv

    def dt(self, t, r):
        _, td = self._time_parts(t)
        sv, _ = self._space_parts(r)
        return td * sv

    def lap(self, t, r):
        tv, _ = self._time_parts(t)
        _, sl = self._space_parts(r)
        return tv * sl


def weak_residual(traj, psi, field=None):
    """Discrete weak form residual of a trajectory against ``psi``.

    Computes the space-time integral of
    ``u dpsi/dt + u lap(psi) + (b . grad u) psi``
    with the grid quadrature in space and the trapezoid rule over the
    stored frames; the three terms telescope to zero exactly when ``u``
    solves the advected heat equation, so the value measures the
    discretization error, O(h^2 + dt) on smooth data.  ``psi`` must be
    supported strictly inside the domain and strictly between the first
    and last stored times.  Nodes where the sampled drift coefficient is
    singular contribute zero to the drift term; their volume vanishes
    under refinement.
    """
    grid = traj.grid
    if grid.kind != "radial":
        raise ValueError("the weak form check runs on radial grids")
    r = grid.radii
    t0, t1 = traj.times[0], traj.times[-1]
    if not (t0 < psi.t_lo and psi.t_hi < t1):
        raise ValueError("psi must be supported strictly inside the time window")
    if psi.r_support >= grid.r_max:
        raise ValueError("psi must vanish before the outer boundary")
    integrand = np.empty(traj.times.size)
    for i, t in enumerate(traj.times):
        u = traj.frames[i]
        terms = u * (psi.dt(t, r) + psi.lap(t, r))
        if field is not None:
            prof = field.radial_profile(t, r, on_singular="inf")
            adv = np.where(np.isfinite(prof), prof, 0.0) * gradient(u, grid)
            terms = terms + adv * psi.value(t, r)
        integrand[i] = weighted_integral(terms, grid)
    return float(np.trapezoid(integrand, traj.times))


def _grad_magnitude_traj(traj):
    mags = []
    for frame in traj.frames:
        g = gradient(frame, traj.grid)
        mags.append(np.abs(g) if g.ndim == 1 else np.linalg.norm(g, axis=1))
    return Trajectory(traj.grid, traj.times, np.vstack(mags))


def apriori_ratio(traj, f, q, alpha, s, tau, beta, slack=2e-2):
    """Gradient mixed norm of the run over the gradient norm of the data.

    The norm is ``L^{q/(1-alpha)}`` in time of ``L^{qd/(d-2+2alpha)}``
    in space on ``[s, tau]``.  Requires ``beta < (4/q^2) omega_q^2``,
    the hypothesis under which the bound is meaningful; otherwise the
    check would be vacuous and is refused.  For ``alpha = 1`` the bound
    is 1 with the given slack; otherwise the constant is unknown and the
    report is trend only.  Zero data reports 0 and passes.
    """
    if q < 2:
        raise ValueError("q must be at least 2")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if beta >= (4.0 / q**2) * omega(q) ** 2:
        raise ValueError("form bound too large for this q; check refused")
    d = traj.grid.d
    f = np.asarray(f, dtype=float)
    g0 = gradient(f, traj.grid)
    g0 = np.abs(g0) if g0.ndim == 1 else np.linalg.norm(g0, axis=1)
    denom = lp_norm(g0, traj.grid, q)
    desc = {"q": q, "alpha": alpha, "s": s, "tau": tau, "beta": beta}
    if denom == 0.0:
        return _verdict("apriori_ratio", 0.0, 1.0, slack, desc)
    p_time = np.inf if alpha == 1.0 else q / (1.0 - alpha)
    p_space = q * d / (d - 2.0 + 2.0 * alpha)
    num = mixed_norm(_grad_magnitude_traj(traj), p_time, p_space, s, tau)
    measured = num / denom
    bound = 1.0 if alpha == 1.0 else None
    return _verdict("apriori_ratio", measured, bound, slack, desc)


def ratio_spread(values, bound=1.5, name="ratio_spread"):
    """Max over min of a family of measured ratios; uniformity check."""
    values = np.asarray(list(values), dtype=float)
    if values.size == 0 or np.any(values < 0):
        raise ValueError("need nonnegative ratios")
    positive = values[values > 0]
    measured = float(positive.max() / positive.min()) if positive.size else 1.0
    return _verdict(name, measured, bound, 0.0, {"count": int(values.size)})


def lp_ratio(traj, f, p, s, tau, beta, slack=1e-3):
    """``||u(tau)||_p / ||f||_p`` against the contraction bound 1.

    ``f`` is the data fed in at time ``s``.  Valid only above the
    integrability threshold ``2/(2 - sqrt(beta))``; below it the bound
    is not claimed and the check is refused.
    """
    if not np.isinf(p) and p <= lp_threshold(beta):
        raise ValueError("p at or below the threshold; check refused")
    f = np.asarray(f, dtype=float)
    denom = lp_norm(f, traj.grid, p)
    desc = {"p": p, "s": s, "tau": tau, "beta": beta}
    if denom == 0.0:
        return _verdict("lp_ratio", 0.0, 1.0, slack, desc)
    measured = lp_norm(traj.at_time(tau), traj.grid, p) / denom
    return _verdict("lp_ratio", measured, 1.0, slack, desc)


def _iteration_exponents(p, alpha, sigma_prime, d):
    if not 0.0 <= alpha < 1.0:
        raise ValueError("the iteration check needs alpha in [0, 1)")
    cap = d / (d - 2.0 + 2.0 * alpha)
    if not 1.0 < sigma_prime < cap:
        raise ValueError(f"sigma' must lie in (1, {cap})")
    sigma = 1.0 / (1.0 - 1.0 / sigma_prime)
    lam = sigma_prime / ((1.0 - alpha) * cap)
    if lam <= 1.0:
        raise ValueError("exponent relations give lambda <= 1")
    lam_conj = 1.0 / (1.0 - 1.0 / lam)
    return sigma, lam, lam_conj, cap


def iteration_inequality_check(
    traj_m,
    traj_n,
    p,
    alpha,
    sigma_prime,
    s,
    beta,
    level_m,
    level_n,
    c0=ITERATION_C0,
    k=None,
    slack=0.5,
):
    """Both sides of the iteration inequality on a pair of runs.

    The left side is the mixed norm of the difference of the two runs;
    the right side combines the gradient mixed norm of the first run,
    the frozen constant ``c0``, the factor ``(p^{2k})^{1/p}``, and a
    quasi norm of the difference with exponents below one.  ``k``
    defaults to the value that makes the underlying quadratic form
    inequality sharp at this ``p`` and effective bound ``beta + 1/m0``;
    the hypothesis ``p > 2/(2 - sqrt(beta + 1/m0))`` is enforced.
    """
    sigma, lam, lam_conj, cap = _iteration_exponents(p, alpha, sigma_prime, d=traj_m.grid.d)
    if traj_m.grid is not traj_n.grid and traj_m.grid.descriptor() != traj_n.grid.descriptor():
        raise ValueError("runs must share a grid")
    if traj_m.times.shape != traj_n.times.shape or np.any(traj_m.times != traj_n.times):
        raise ValueError("runs must share stored times")
    m0 = min(int(level_m), int(level_n))
    beta_eff = beta + 1.0 / m0
    if p <= 2.0:
        raise ValueError("the iteration exponents need p > 2")
    if beta_eff >= 4.0 or p <= 2.0 / (2.0 - np.sqrt(beta_eff)):
        raise ValueError("p too small for the effective form bound")
    bracket = 4.0 * (p - 1.0) / p**2 - (2.0 / p) * np.sqrt(beta_eff)
    if k is None:
        k = float(np.log(2.0 / bracket) / np.log(p))
    T = float(traj_m.times[-1])
    diff = Trajectory(traj_m.grid, traj_m.times, traj_m.frames - traj_n.frames)
    lhs = mixed_norm(diff, p / (1.0 - alpha), p * cap, s, T)
    grad_norm = mixed_norm(_grad_magnitude_traj(traj_m), 2.0 * lam_conj, 2.0 * sigma, s, T)
    quasi = _mixed_quasi(diff, (p - 2.0) * lam, (p - 2.0) * sigma_prime, s, T)
    rhs = (
        (c0 * beta_eff * grad_norm**2) ** (1.0 / p)
        * (p ** (2.0 * k)) ** (1.0 / p)
        * quasi ** (1.0 - 2.0 / p)
    )
    desc = {
        "p": p,
        "alpha": alpha,
        "sigma_prime": sigma_prime,
        "s": s,
        "m": int(level_m),
        "n": int(level_n),
        "k": k,
        "c0": c0,
        "grad_norm": grad_norm,
        "quasi": quasi,
    }
    return _verdict("iteration_inequality", lhs, rhs, slack, desc)


def _lattice(T, count):
    return np.linspace(0.0, T, count + 1)


def cauchy_matrix(grid, drift_for_level, f, levels, T, dt, norm="supL2", lattice=8):
    """Pairwise distances of runs across regularization levels.

    For each level the initial data is evolved from every lattice start
    time; entry ``(i, j)`` is the sup over lattice pairs ``s < t`` of
    the chosen spatial norm (``supL2`` or ``supC``) of the difference at
    time ``t``.  All runs share the grid, the step, and ``f``.
    """
    if norm not in ("supL2", "supC"):
        raise ValueError(f"unknown norm {norm!r}")
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must increase")
    marks = _lattice(T, lattice)
    stride = round(marks[1] / dt)
    if stride < 1 or abs(stride * dt - marks[1]) > 1e-9:
        raise ValueError("dt must divide the lattice spacing")
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.size,):
        raise ValueError("grid mismatch: data size differs from grid size")
    snapshots = []
    for level in levels:
        drift = drift_for_level(level)
        per_start = []
        for s in marks[:-1]:
            traj = evolve(grid, drift, f, s, T, dt, store=stride)
            per_start.append(traj)
        snapshots.append(per_start)
    p = 2 if norm == "supL2" else np.inf
    out = np.zeros((len(levels), len(levels)))
    for i in range(len(levels)):
        for j in range(i + 1, len(levels)):
            worst = 0.0
            for si, s in enumerate(marks[:-1]):
                ti = snapshots[i][si]
                tj = snapshots[j][si]
                for a, b in zip(ti.frames[1:], tj.frames[1:]):
                    worst = max(worst, lp_norm(a - b, grid, p))
            out[i, j] = out[j, i] = worst
    return out


def cauchy_trend(matrix, slack=0.05):
    """Entries decrease along each superdiagonal, within the slack."""
    matrix = np.asarray(matrix, dtype=float)
    worst = 0.0
    for k in range(1, matrix.shape[0]):
        diag = np.diagonal(matrix, offset=k)
        for a, b in zip(diag, diag[1:]):
            if a > 0:
                worst = max(worst, b / a)
    return _verdict(
        "cauchy_trend",
        worst,
        1.0,
        slack,
        {"size": int(matrix.shape[0])},
    )


def counterexample_check(kappa, alpha_exp, d, grid, t0, t1, dt=None):
    """Two reports on the closed form vanishing solution.

    First, propagating the closed form from ``t0`` with its own drift
    reproduces the closed form at ``t1`` within a few percent in
    relative sup norm.  Second, the initial sup norm follows the power
    law ``t0^(kappa - d/2)`` as ``t0`` drops through three decades, so
    the data vanishes while the solution does not: started from the
    same limit data, the zero solution and this one differ.
    """
    if not 0.0 < t0 < t1 < 1.0:
        raise ValueError("need 0 < t0 < t1 < 1")
    field = LogCounterexampleDrift(kappa, alpha_exp, d)
    if alpha_exp == 1.0 and kappa <= d / 2.0:
        raise ValueError("no decay branch: kappa must exceed d/2 when alpha = 1")
    if dt is None:
        dt = (t1 - t0) / 800.0
    f = explicit_solution(kappa, alpha_exp, d, t0, grid.radii)
    traj = evolve(grid, ExactRadialDrift(field), f, t0, t1, dt, store="ends")
    target = explicit_solution(kappa, alpha_exp, d, t1, grid.radii)
    match = float(np.max(np.abs(traj.final - target)) / np.max(np.abs(target)))
    match_report = _verdict(
        "counterexample_match",
        match,
        0.02,
        0.0,
        {"kappa": kappa, "alpha": alpha_exp, "t0": t0, "t1": t1, "dt": dt, "n": grid.n},
    )
    probes = t0 * 0.5 ** np.arange(12)
    sups = np.array([supnorm_decay(kappa, alpha_exp, d, t) for t in probes])
    if alpha_exp == 1.0:
        # On this branch the sup norm is an exact power law in t, so the
        # fitted exponent must land on kappa - d/2.
        slope = float(np.polyfit(np.log(probes), np.log(sups), 1)[0])
        decay_report = _verdict(
            "counterexample_decay",
            abs(slope - (kappa - d / 2.0)),
            1e-3,
            0.0,
            {
                "kappa": kappa,
                "alpha": alpha_exp,
                "d": d,
                "t0": t0,
                "slope": slope,
                "sup_last": sups[-1],
            },
        )
    else:
        ratios = sups[1:] / sups[:-1]
        decay_report = _verdict(
            "counterexample_decay",
            float(ratios.max()),
            1.0,
            0.0,
            {
                "kappa": kappa,
                "alpha": alpha_exp,
                "d": d,
                "t0": t0,
                "sup_last": sups[-1],
            },
        )
    return match_report, decay_report

"""Closed-form constants for the drift-perturbed heat flow.

Everything here is scalar arithmetic: admissibility thresholds for the
form-bound coefficient beta, the coefficient selections used by the weighted
gradient energy estimate, the exponent bookkeeping of the Moser-type
iteration, and the damping primitive that absorbs the time-dependent part
g(t) of a form bound.

Conventions: the drift b is form-bounded with constants (beta, g) when
    int ||b phi||_2^2 dt <= beta int ||grad phi||_2^2 dt + int g(t) ||phi||_2^2 dt,
and `inf` is an accepted encoding for "no truncation" (m) and for limiting
exponents (q, p).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

__all__ = [
    "omega",
    "beta_threshold",
    "lp_threshold",
    "lps_subcritical",
    "EnergyCoefficients",
    "energy_coefficients",
    "MoserParams",
    "moser_params",
    "damping_h",
]

INF = float("inf")


def omega(q: float) -> float:
    """(q - 1) / (2q - 3); decreasing on q >= 2 with limit 1/2."""
    if q == INF:
        return 0.5
    q = float(q)
    if q < 2.0:
        raise ValueError(f"omega requires q >= 2, got {q}")
    return (q - 1.0) / (2.0 * q - 3.0)


def beta_threshold(d: int) -> float:
    """Largest admissible form-bound coefficient, (4/d^2) * omega(d)^2."""
    if int(d) != d or d < 3:
        raise ValueError(f"dimension must be an integer >= 3, got {d}")
    d = int(d)
    return 4 * (d - 1) ** 2 / (d * (2 * d - 3)) ** 2


def lp_threshold(beta: float) -> float:
    """Smallest exponent with a sup-to-Lp contraction, 2 / (2 - sqrt(beta))."""
    beta = float(beta)
    if not 0.0 <= beta < 4.0:
        raise ValueError(f"lp_threshold requires 0 <= beta < 4, got {beta}")
    return 2.0 / (2.0 - math.sqrt(beta))


def lps_subcritical(p: float, q: float, d: int) -> bool:
    """True when d/p + 2/q <= 1, the mixed-norm class sitting inside F_0."""
    if int(d) != d or d < 3:
        raise ValueError(f"dimension must be an integer >= 3, got {d}")
    if not (p > 0 and q > 0):
        raise ValueError("exponents must be positive")
    space = 0.0 if p == INF else d / float(p)
    time = 0.0 if q == INF else 2.0 / float(q)
    return space + time <= 1.0


@dataclass(frozen=True)
class EnergyCoefficients:
    """Coefficient selection for the gradient energy estimate in L^q.

    eta_star / kappa_star / gamma_star are the Young-inequality weights that
    balance the drift term against the diffusion; coercivity = 1 - sqrt(beta)/2
    multiplies the surviving gradient square; admissible_margin is
    (q - 1) - (q sqrt(beta) / 2)(2q - 3), positive exactly when
    sqrt(beta) < (2/q) omega(q).
    """

    q: float
    beta: float
    eta_star: float
    kappa_star: float
    gamma_star: float
    coercivity: float
    admissible_margin: float
    admissible: bool
    degenerate: bool


def energy_coefficients(q: float, beta: float, m: float = INF) -> EnergyCoefficients:
    """Evaluate the coefficient selection at truncation level m (inf = none)."""
    q = float(q)
    beta = float(beta)
    if q < 2.0:
        raise ValueError(f"q >= 2 required, got {q}")
    if beta < 0.0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    if m != INF and m < 1.0:
        raise ValueError(f"truncation level must be >= 1 or inf, got {m}")
    inv_m = 0.0 if m == INF else 1.0 / float(m)
    root = math.sqrt(beta)
    eta_star = q * math.sqrt(beta + inv_m) / 4.0
    kappa_star = (q - 1.0) / 2.0
    gamma_star = q * root / (q - 1.0)
    coercivity = 1.0 - root / 2.0
    margin = (q - 1.0) - (q * root / 2.0) * (2.0 * q - 3.0)
    # sqrt(beta) < (2/q) omega(q) is the same sign condition as margin > 0
    admissible = root < (2.0 / q) * omega(q)
    return EnergyCoefficients(
        q=q,
        beta=beta,
        eta_star=eta_star,
        kappa_star=kappa_star,
        gamma_star=gamma_star,
        coercivity=coercivity,
        admissible_margin=margin,
        admissible=admissible,
        degenerate=(beta == 0.0),
    )


@dataclass(frozen=True)
class MoserParams:
    """Exponent schedule of the iteration controlling sup-norm differences.

    p_seq grows geometrically (sandwiched between c1*a^l and c2*a^l), and the
    derived sequences alpha_seq / gamma_seq / gamma_root_seq stay inside the
    closed-form bounds alpha_sup_bound / gamma_inf_bound / gamma_bound, which
    is what makes the iterated inequality summable.
    """

    beta: float
    p0: float
    sigma_prime: float
    d: int
    alpha: float
    a: float
    k: float
    c1: float
    c2: float
    p_seq: np.ndarray
    alpha_seq: np.ndarray
    gamma_seq: np.ndarray
    gamma_root_seq: np.ndarray
    alpha_sup_bound: float
    gamma_inf_bound: float
    gamma_bound: float


def _check_close(name: str, got: np.ndarray, want: np.ndarray, rtol: float = 1e-12) -> None:
    scale = np.maximum(np.abs(want), 1.0)
    worst = float(np.max(np.abs(got - want) / scale))
    if worst > rtol:
        raise ArithmeticError(f"{name}: internal consistency check failed ({worst:.3e})")


def moser_params(
    beta: float,
    p0: float,
    sigma_prime: float,
    d: int,
    levels: int = 60,
) -> MoserParams:
    """Build the full exponent schedule for `levels` iteration steps."""
    beta = float(beta)
    p0 = float(p0)
    sigma_prime = float(sigma_prime)
    if int(d) != d or d < 3:
        raise ValueError(f"dimension must be an integer >= 3, got {d}")
    d = int(d)
    if not 0.0 <= beta < 4.0:
        raise ValueError(f"beta must lie in [0, 4), got {beta}")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    root = math.sqrt(beta)
    if p0 <= 2.0 / (2.0 - root):
        raise ValueError(f"p0 must exceed 2/(2 - sqrt(beta)) = {2.0 / (2.0 - root):.6g}")
    alpha = 2.0 / (d + 2)
    ratio = d / (d - 2.0 + 2.0 * alpha)
    if not 1.0 < sigma_prime < ratio:
        raise ValueError(f"sigma_prime must lie in (1, {ratio:.6g}), got {sigma_prime}")
    a = ratio / sigma_prime

    # smallest admissible doubling exponent: equality in
    # 4(p0-1)/p0^2 - (2/p0) sqrt(beta) >= 2 / p0^k
    lhs = 4.0 * (p0 - 1.0) / p0**2 - (2.0 / p0) * root
    k = math.log(2.0 / lhs) / math.log(p0)
    if k <= 1.0:
        raise ValueError(f"iteration exponent k = {k:.6g} <= 1; increase beta or decrease p0")

    ls = np.arange(1, levels + 1, dtype=float)
    base = p0 / sigma_prime
    p_seq = (a**ls * (base + 2.0) - a ** (ls - 1.0) * base - 2.0) / (a - 1.0)

    # the closed form must reproduce the recurrence
    # sigma'(p_1 - 2) = p0,  sigma'(p_{l+1} - 2) = p_l * d/(d-2+2 alpha)
    p_rec = np.empty(levels)
    p_rec[0] = base + 2.0
    for i in range(1, levels):
        p_rec[i] = a * p_rec[i - 1] + 2.0
    _check_close("p_seq recurrence", p_seq, p_rec)

    c1 = p_seq[0] / a
    c2 = c1 / (a - 1.0)
    geom = a**ls
    if np.any(p_seq < c1 * geom * (1 - 1e-12)) or np.any(p_seq > c2 * geom * (1 + 1e-12)):
        raise ArithmeticError("geometric sandwich c1 a^l <= p_l <= c2 a^l violated")

    gamma_seq = np.cumprod(1.0 - 2.0 / p_seq)
    _check_close("gamma product", gamma_seq, p0 * a ** (ls - 1.0) / (sigma_prime * p_seq))

    alpha_seq = np.empty(levels)
    acc = 1.0 / p_seq[0]
    alpha_seq[0] = acc
    for i in range(1, levels):
        acc = (1.0 - 2.0 / p_seq[i]) * acc + 1.0 / p_seq[i]
        alpha_seq[i] = acc
    _check_close("alpha closed form", alpha_seq, (a**ls - 1.0) / ((a - 1.0) * p_seq))

    # Gamma_l^(1/2k) = prod_j p_j^(a^(l-j)/p_l), evaluated in log space
    logs = np.log(p_seq)
    gamma_root_seq = np.empty(levels)
    for i in range(levels):
        powers = a ** np.arange(i, -1, -1, dtype=float)
        gamma_root_seq[i] = math.exp(float(np.dot(powers, logs[: i + 1])) / p_seq[i])

    alpha_sup_bound = 1.0 / (base + 2.0 - p0 * (d - 2.0 + 2.0 * alpha) / d)
    shrink = 1.0 - sigma_prime * (d - 2.0 + 2.0 * alpha) / d
    gamma_inf_bound = shrink / (shrink + 2.0 * sigma_prime / p0)
    gamma_bound = (c1 ** (1.0 / (a - 1.0)) * c2 ** (a / (a - 1.0))) ** (1.0 / c2)

    if float(np.max(alpha_seq)) > alpha_sup_bound * (1 + 1e-12):
        raise ArithmeticError("alpha_seq exceeds its closed-form bound")
    if float(np.min(gamma_seq)) <= gamma_inf_bound * (1 - 1e-12):
        raise ArithmeticError("gamma_seq dips below its closed-form bound")
    if float(np.max(gamma_root_seq)) > gamma_bound * (1 + 1e-12):
        raise ArithmeticError("Gamma_l^(1/2k) exceeds its closed-form bound")

    return MoserParams(
        beta=beta,
        p0=p0,
        sigma_prime=sigma_prime,
        d=d,
        alpha=alpha,
        a=a,
        k=k,
        c1=c1,
        c2=c2,
        p_seq=p_seq,
        alpha_seq=alpha_seq,
        gamma_seq=gamma_seq,
        gamma_root_seq=gamma_root_seq,
        alpha_sup_bound=alpha_sup_bound,
        gamma_inf_bound=gamma_inf_bound,
        gamma_bound=gamma_bound,
    )


def damping_h(
    coef: float,
    g: Callable[[float], float] | tuple[Sequence[float], Sequence[float]] | None,
    t: float,
) -> float:
    """h(t) = -coef * int_0^t g(theta) dtheta, the damping exponent.

    g may be a callable, a (times, values) sample pair (integrated as a
    piecewise-linear profile), or None for g == 0.
    """
    coef = float(coef)
    t = float(t)
    if coef < 0.0:
        raise ValueError(f"damping coefficient must be nonnegative, got {coef}")
    if t < 0.0:
        raise ValueError(f"time must be nonnegative, got {t}")
    if g is None or coef == 0.0 or t == 0.0:
        return 0.0
    if callable(g):
        integral, _ = quad(g, 0.0, t, epsabs=1e-13, epsrel=1e-13, limit=200)
        return -coef * integral
    times, values = (np.asarray(part, dtype=float) for part in g)
    if times.ndim != 1 or times.shape != values.shape or times.size < 2:
        raise ValueError("sampled g must be two equal-length 1-d arrays")
    if np.any(np.diff(times) <= 0):
        raise ValueError("sample times must be strictly increasing")
    if t < times[0] or t > times[-1] or times[0] > 0.0:
        raise ValueError("sampled g must cover [0, t]")
    keep = times < t
    cut = np.concatenate([times[keep], [t]])
    vals = np.concatenate([values[keep], [float(np.interp(t, times, values))]])
    return -coef * float(np.trapezoid(vals, cut))

"""Catalog of singular drift fields with known or estimable form bounds.

Each field knows how to evaluate itself pointwise (raising at its singular
locus rather than returning non-finite values), how to describe itself on a
radially symmetric grid, and what form bound (beta, g) can be attached to it
in closed form.  Fields whose direction is a fixed vector e are represented
on radial grids by their magnitude envelope; that surrogate is exact for the
quantities that only involve |b| (truncation, form-bound weights) and is
flagged via `radial_exact`.

The vanishing-solution pair (`explicit_solution`, `supnorm_decay`) belongs to
the logarithmic drift: started from zero initial data it produces a nonzero
solution, which is the non-uniqueness phenomenon the verifier reproduces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Callable

import numpy as np

__all__ = [
    "DriftDomainError",
    "FormBoundInfo",
    "DriftField",
    "ZeroDrift",
    "HardyDrift",
    "SplitDrift",
    "AnnulusDrift",
    "TimeLogDrift",
    "LogCounterexampleDrift",
    "BallDrift",
    "ScaledDrift",
    "SumDrift",
    "build_drift",
    "explicit_solution",
    "supnorm_decay",
]


class DriftDomainError(ValueError):
    """Evaluation requested at a singular locus or outside the time domain."""


@dataclass(frozen=True)
class FormBoundInfo:
    """Closed-form form-bound data: |int ||b phi||^2 <= beta ||grad phi||^2 + g(t) ||phi||^2|.

    beta is None when no closed-form coefficient is available; g is None when
    the time profile vanishes.  `heuristic` marks combinations that are not
    sharp inequalities (sums of fields).
    """

    beta: float | None
    g: Callable[[float], float] | None
    provenance: str
    heuristic: bool = False
    note: str = ""


def _unit_diagonal(d: int) -> np.ndarray:
    return np.full(d, 1.0 / math.sqrt(d))


def _as_points(x) -> tuple[np.ndarray, bool]:
    pts = np.asarray(x, dtype=float)
    if pts.ndim == 1:
        return pts[None, :], True
    if pts.ndim == 2:
        return pts, False
    raise ValueError("points must have shape (d,) or (N, d)")


def _check_dim(d) -> int:
    if int(d) != d or d < 3:
        raise ValueError(f"dimension must be an integer >= 3, got {d}")
    return int(d)


class DriftField:
    """Base class; subclasses fill in the vectorized evaluation kernels."""

    d: int
    kind: str
    singular_locus: str = "none"
    radial_exact: bool = True
    time_dependent: bool = False

    # -- evaluation ------------------------------------------------------
    def _values(self, t: float, pts: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _magnitudes(self, t: float, pts: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = self._values(t, pts)
        return np.linalg.norm(vals, axis=1)

    def _check_time(self, t: float) -> None:
        return None

    def eval(self, t: float, x) -> np.ndarray:
        """Field value at a single point or a batch of points; raises on the locus."""
        self._check_time(t)
        pts, single = _as_points(x)
        if pts.shape[1] != self.d:
            raise ValueError(f"points must be {self.d}-dimensional")
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = self._values(t, pts)
        bad = ~np.all(np.isfinite(vals), axis=1)
        if np.any(bad):
            raise DriftDomainError(
                f"{self.kind}: evaluation at singular locus ({self.singular_locus})"
            )
        return vals[0] if single else vals

    def magnitude(self, t: float, x, on_singular: str = "raise") -> np.ndarray | float:
        """|b| from the closed form; on_singular='inf' marks locus points instead."""
        self._check_time(t)
        pts, single = _as_points(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            mags = self._magnitudes(t, pts)
        mags = np.where(np.isfinite(mags), mags, np.inf)
        if on_singular == "raise" and np.any(~np.isfinite(mags)):
            raise DriftDomainError(
                f"{self.kind}: magnitude at singular locus ({self.singular_locus})"
            )
        return float(mags[0]) if single else mags

    # -- radial description ---------------------------------------------
    def _radial(self, t: float, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError(f"{self.kind} has no radial description")

    def radial_profile(self, t: float, r, on_singular: str = "raise") -> np.ndarray:
        """Signed radial coefficient b_r(r); envelope magnitude for e-directed kinds."""
        self._check_time(t)
        rr = np.atleast_1d(np.asarray(r, dtype=float))
        if np.any(rr < 0):
            raise ValueError("radii must be nonnegative")
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self._radial(t, rr)
        if on_singular == "raise" and np.any(~np.isfinite(out)):
            raise DriftDomainError(f"{self.kind}: radial profile hits {self.singular_locus}")
        return out

    # -- bookkeeping -----------------------------------------------------
    def known_form_bound(self) -> FormBoundInfo:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroDrift(DriftField):
    d: int = 3
    kind: str = dataclass_field(default="zero", init=False)

    def __post_init__(self):
        object.__setattr__(self, "d", _check_dim(self.d))

    def _values(self, t, pts):
        return np.zeros_like(pts)

    def _radial(self, t, r):
        return np.zeros_like(r)

    def known_form_bound(self):
        return FormBoundInfo(beta=0.0, g=None, provenance="lps_subcritical",
                             note="identically zero")


def _hardy_beta(a: float, d: int) -> float:
    return a * a * (2.0 / (d - 2.0)) ** 2


@dataclass(frozen=True)
class HardyDrift(DriftField):
    """b(x) = a (x - x0) / |x - x0|^2, the borderline inverse-distance field."""

    a: float
    d: int = 3
    x0: tuple[float, ...] | None = None
    kind: str = dataclass_field(default="hardy", init=False)

    def __post_init__(self):
        object.__setattr__(self, "d", _check_dim(self.d))
        if not math.isfinite(self.a):
            raise ValueError("hardy coefficient must be finite")
        center = (0.0,) * self.d if self.x0 is None else tuple(float(c) for c in self.x0)
        if len(center) != self.d:
            raise ValueError("x0 must have length d")
        object.__setattr__(self, "x0", center)
        object.__setattr__(self, "singular_locus", f"point x0 = {center}")
        object.__setattr__(self, "radial_exact", all(c == 0.0 for c in center))

    def _values(self, t, pts):
        rel = pts - np.asarray(self.x0)
        return self.a * rel / np.sum(rel * rel, axis=1)[:, None]

    def _magnitudes(self, t, pts):
        rel = pts - np.asarray(self.x0)
        return abs(self.a) / np.linalg.norm(rel, axis=1)

    def _radial(self, t, r):
        if not self.radial_exact:
            raise NotImplementedError("off-center hardy field has no radial description")
        return self.a / r

    def known_form_bound(self):
        return FormBoundInfo(beta=_hardy_beta(self.a, self.d), g=None,
                             provenance="hardy_inequality")


@dataclass(frozen=True)
class SplitDrift(DriftField):
    """Two inverse-distance fields acting on complementary coordinate blocks.

    x = (y, z) with y the first `n` coordinates and z the remaining `m`;
    b = c1 y/|y|^2 (+) c2 z/|z|^2.  The two blocks are pointwise orthogonal,
    so the closed-form bound is max of the blockwise constants (each block
    needs >= 3 coordinates for its own inverse-square inequality).
    """

    c1: float
    c2: float
    n: int
    m: int
    kind: str = dataclass_field(default="split", init=False)

    def __post_init__(self):
        if int(self.n) != self.n or int(self.m) != self.m or self.n < 1 or self.m < 0:
            raise ValueError("block sizes must be integers with n >= 1, m >= 0")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "d", _check_dim(self.n + self.m))
        if self.m == 0 and self.c2 != 0.0:
            raise ValueError("empty second block requires c2 = 0")
        parts = []
        if self.c1 != 0.0:
            parts.append("y = 0")
        if self.c2 != 0.0:
            parts.append("z = 0")
        object.__setattr__(self, "singular_locus", "subspace " + ", ".join(parts) if parts else "none")

    def _values(self, t, pts):
        out = np.zeros_like(pts)
        y = pts[:, : self.n]
        out[:, : self.n] = self.c1 * y / np.sum(y * y, axis=1)[:, None]
        if self.m:
            z = pts[:, self.n:]
            out[:, self.n:] = self.c2 * z / np.sum(z * z, axis=1)[:, None]
        return out

    def _radial(self, t, r):
        # b . x = c1 + c2 everywhere, so the radial component is (c1+c2)/r
        return (self.c1 + self.c2) / r

    def known_form_bound(self):
        betas = []
        for coef, block in ((self.c1, self.n), (self.c2, self.m)):
            if coef == 0.0:
                continue
            if block < 3:
                return FormBoundInfo(
                    beta=None, g=None, provenance="unknown",
                    note=f"inverse-square block of dimension {block} has no form bound",
                )
            betas.append(_hardy_beta(coef, block))
        return FormBoundInfo(beta=max(betas, default=0.0), g=None,
                             provenance="hardy_inequality",
                             note="max over orthogonal blocks")


@dataclass(frozen=True)
class AnnulusDrift(DriftField):
    """Fixed-direction field C ||x|-1|^(-a_exp) supported on 1-delta < |x| < 1+delta."""

    c: float
    delta: float
    a_exp: float
    d: int = 3
    kind: str = dataclass_field(default="annulus", init=False)
    radial_exact: bool = dataclass_field(default=False, init=False)

    def __post_init__(self):
        object.__setattr__(self, "d", _check_dim(self.d))
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0.0 < self.a_exp < 0.5:
            raise ValueError(
                f"a_exp must lie in (0, 1/2) for a square-integrable envelope, got {self.a_exp}"
            )
        object.__setattr__(self, "singular_locus", "sphere |x| = 1")

    def _shell(self, rad: np.ndarray) -> np.ndarray:
        inside = (rad > 1.0 - self.delta) & (rad < 1.0 + self.delta)
        return np.where(inside, np.abs(rad - 1.0) ** (-self.a_exp), 0.0)

    def _values(self, t, pts):
        rad = np.linalg.norm(pts, axis=1)
        return self.c * self._shell(rad)[:, None] * _unit_diagonal(self.d)[None, :]

    def _radial(self, t, r):
        # magnitude envelope along the fixed unit direction
        return self.c * self._shell(r)

    def known_form_bound(self):
        return FormBoundInfo(
            beta=None, g=None, provenance="unknown",
            note="integrable interface singularity; coefficient measured numerically",
        )


def _time_log_factor(t: float, t0: float, eps: float) -> float:
    gap = abs(t - t0)
    if gap == 0.0:
        return math.inf
    return gap ** -0.5 * math.log(math.e + 1.0 / gap) ** (-(1.0 + eps) / 2.0)


@dataclass(frozen=True)
class TimeLogDrift(DriftField):
    """Spatially constant field a2 |t-t0|^(-1/2) log(e + |t-t0|^(-1))^(-(1+eps)/2) e."""

    a2: float
    t0: float
    eps: float
    d: int = 3
    kind: str = dataclass_field(default="time_log", init=False)
    radial_exact: bool = dataclass_field(default=False, init=False)
    time_dependent: bool = dataclass_field(default=True, init=False)

    def __post_init__(self):
        object.__setattr__(self, "d", _check_dim(self.d))
        if self.eps <= 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        object.__setattr__(self, "singular_locus", f"time t = {self.t0}")

    def _values(self, t, pts):
        fac = self.a2 * _time_log_factor(t, self.t0, self.eps)
        return np.full_like(pts, 0.0) + fac * _unit_diagonal(self.d)[None, :]

    def _magnitudes(self, t, pts):
        fac = abs(self.a2) * _time_log_factor(t, self.t0, self.eps)
        return np.full(pts.shape[0], fac)

    def _radial(self, t, r):
        return np.full_like(r, self.a2 * _time_log_factor(t, self.t0, self.eps))

    def known_form_bound(self):
        a2, t0, eps = self.a2, self.t0, self.eps

        def g(t: float) -> float:
            gap = abs(t - t0)
            if gap == 0.0:
                return math.inf
            return a2 * a2 / gap * math.log(math.e + 1.0 / gap) ** (-(1.0 + eps))

        return FormBoundInfo(beta=0.0, g=g, provenance="time_envelope",
                             note="|b(t)| is spatially constant, so g = |b(t)|^2 exactly")


@dataclass(frozen=True)
class LogCounterexampleDrift(DriftField):
    """Inward inverse-distance drift -2 kappa alpha (-ln t)^(alpha-1) x/|x|^2 on 0 < t < 1.

    The sign is the one under which `explicit_solution` solves
    du/dt = Lap u + b . grad u, so propagating that solution forward is a
    direct check of the non-uniqueness mechanism.
    """

    kappa: float
    alpha_exp: float
    d: int = 3
    kind: str = dataclass_field(default="log_counterexample", init=False)
    time_dependent: bool = dataclass_field(default=True, init=False)

    def __post_init__(self):
        object.__setattr__(self, "d", _check_dim(self.d))
        if self.kappa <= 0.0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.alpha_exp < 1.0:
            raise ValueError(f"alpha_exp must be >= 1, got {self.alpha_exp}")
        object.__setattr__(self, "singular_locus", "point x = 0; time endpoints t in {0, 1}")

    def _check_time(self, t):
        if not 0.0 < t < 1.0:
            raise DriftDomainError(f"logarithmic drift defined for 0 < t < 1, got t = {t}")

    def _coef(self, t: float) -> float:
        return 2.0 * self.kappa * self.alpha_exp * (-math.log(t)) ** (self.alpha_exp - 1.0)

    def _values(self, t, pts):
        return -self._coef(t) * pts / np.sum(pts * pts, axis=1)[:, None]

    def _magnitudes(self, t, pts):
        return self._coef(t) / np.linalg.norm(pts, axis=1)

    def _radial(self, t, r):
        return -self._coef(t) / r

    def known_form_bound(self):
        if self.alpha_exp == 1.0:
            floor = 4.0 * self.d**2 / (self.d - 2.0) ** 2
            return FormBoundInfo(
                beta=None, g=None, provenance="unknown",
                note=f"any form bound requires beta > {floor:.6g}",
            )
        return FormBoundInfo(beta=None, g=None, provenance="unknown",
                             note="coefficient blows up as t -> 0; no form bound for any beta")


@dataclass(frozen=True)
class BallDrift(DriftField):
    """Bounded field c e on |x| < radius; the constant-magnitude reference."""

    c: float
    radius: float = 1.0
    d: int = 3
    kind: str = dataclass_field(default="ball", init=False)
    radial_exact: bool = dataclass_field(default=False, init=False)

    def __post_init__(self):
        object.__setattr__(self, "d", _check_dim(self.d))
        if self.radius <= 0.0:
            raise ValueError("radius must be positive")
        if self.c < 0.0:
            raise ValueError("magnitude must be nonnegative")

    def _values(self, t, pts):
        inside = np.linalg.norm(pts, axis=1) < self.radius
        return self.c * inside[:, None] * _unit_diagonal(self.d)[None, :]

    def _radial(self, t, r):
        return self.c * (r < self.radius)

    def known_form_bound(self):
        c = self.c
        return FormBoundInfo(beta=0.0, g=lambda _t: c * c, provenance="lps_subcritical",
                             note="bounded field: g = sup |b|^2")


@dataclass(frozen=True)
class ScaledDrift(DriftField):
    """c times an inner field; form bounds scale by c^2."""

    scale: float
    inner: DriftField
    kind: str = dataclass_field(default="scaled", init=False)

    def __post_init__(self):
        if not math.isfinite(self.scale):
            raise ValueError("scale must be finite")
        object.__setattr__(self, "d", self.inner.d)
        object.__setattr__(self, "singular_locus", self.inner.singular_locus)
        object.__setattr__(self, "radial_exact", self.inner.radial_exact)
        object.__setattr__(self, "time_dependent", self.inner.time_dependent)

    def _check_time(self, t):
        self.inner._check_time(t)

    def _values(self, t, pts):
        return self.scale * self.inner._values(t, pts)

    def _magnitudes(self, t, pts):
        return abs(self.scale) * self.inner._magnitudes(t, pts)

    def _radial(self, t, r):
        return self.scale * self.inner._radial(t, r)

    def known_form_bound(self):
        info = self.inner.known_form_bound()
        c2 = self.scale * self.scale
        g = None
        if info.g is not None:
            inner_g = info.g
            g = lambda t: c2 * inner_g(t)  # noqa: E731
        beta = None if info.beta is None else c2 * info.beta
        return FormBoundInfo(beta=beta, g=g, provenance="scaling",
                             heuristic=info.heuristic, note=info.note)


@dataclass(frozen=True)
class SumDrift(DriftField):
    """Superposition of catalog fields; the combined bound is a heuristic."""

    parts: tuple[DriftField, ...]
    kind: str = dataclass_field(default="sum", init=False)

    def __post_init__(self):
        if not self.parts:
            raise ValueError("sum needs at least one part")
        dims = {p.d for p in self.parts}
        if len(dims) != 1:
            raise ValueError("all parts must share the dimension")
        object.__setattr__(self, "parts", tuple(self.parts))
        object.__setattr__(self, "d", self.parts[0].d)
        object.__setattr__(self, "singular_locus",
                           "; ".join(p.singular_locus for p in self.parts))
        object.__setattr__(self, "radial_exact", all(p.radial_exact for p in self.parts))
        object.__setattr__(self, "time_dependent", any(p.time_dependent for p in self.parts))

    def _check_time(self, t):
        for p in self.parts:
            p._check_time(t)

    def _values(self, t, pts):
        total = self.parts[0]._values(t, pts).copy()
        for p in self.parts[1:]:
            total += p._values(t, pts)
        return total

    def _radial(self, t, r):
        total = self.parts[0]._radial(t, r).copy()
        for p in self.parts[1:]:
            total += p._radial(t, r)
        return total

    def known_form_bound(self):
        roots = 0.0
        gs = []
        for p in self.parts:
            info = p.known_form_bound()
            if info.beta is None:
                return FormBoundInfo(beta=None, g=None, provenance="unknown",
                                     note=f"part '{p.kind}' has no closed-form bound")
            roots += math.sqrt(info.beta)
            if info.g is not None:
                gs.append(info.g)

        g = None
        if gs:
            def g(t: float) -> float:
                return sum(math.sqrt(gi(t)) for gi in gs) ** 2

        return FormBoundInfo(beta=roots * roots, g=g, provenance="sum_heuristic",
                             heuristic=True,
                             note="(sum of sqrt betas)^2; not a sharp bound")


_SIMPLE_KINDS = {
    "zero": (ZeroDrift, ("d",)),
    "hardy": (HardyDrift, ("a", "d", "x0")),
    "split": (SplitDrift, ("c1", "c2", "n", "m")),
    "annulus": (AnnulusDrift, ("c", "delta", "a_exp", "d")),
    "time_log": (TimeLogDrift, ("a2", "t0", "eps", "d")),
    "log_counterexample": (LogCounterexampleDrift, ("kappa", "alpha_exp", "d")),
    "ball": (BallDrift, ("c", "radius", "d")),
}


def build_drift(spec: dict) -> DriftField:
    """Construct a field from a plain mapping (the config-facing constructor)."""
    if "kind" not in spec:
        raise ValueError("drift spec needs a 'kind'")
    spec = dict(spec)
    kind = spec.pop("kind")
    scale = spec.pop("scale", None)
    if kind == "sum":
        parts = spec.pop("parts", None)
        if not parts:
            raise ValueError("sum drift needs a nonempty 'parts' list")
        if spec:
            raise ValueError(f"unknown keys for sum drift: {sorted(spec)}")
        field = SumDrift(parts=tuple(build_drift(p) for p in parts))
    else:
        if kind not in _SIMPLE_KINDS:
            raise ValueError(f"unknown drift kind '{kind}'")
        cls, allowed = _SIMPLE_KINDS[kind]
        extra = set(spec) - set(allowed)
        if extra:
            raise ValueError(f"unknown keys for {kind} drift: {sorted(extra)}")
        field = cls(**spec)
    if scale is not None and scale != 1.0:
        field = ScaledDrift(scale=float(scale), inner=field)
    return field


def explicit_solution(kappa: float, alpha_exp: float, d: int, t: float, x) -> np.ndarray | float:
    """(4 pi t)^(-d/2) exp(-kappa (-ln t)^alpha - |x|^2/(4t)) on 0 < t < 1.

    x may be a point, a batch of points, or directly radii (scalars / 1-d
    arrays are interpreted as |x|).
    """
    d = _check_dim(d)
    if kappa <= 0.0 or alpha_exp < 1.0:
        raise ValueError("require kappa > 0 and alpha_exp >= 1")
    if not 0.0 < t < 1.0:
        raise DriftDomainError(f"solution defined for 0 < t < 1, got t = {t}")
    arr = np.asarray(x, dtype=float)
    rad = np.linalg.norm(arr, axis=-1) if arr.ndim >= 2 else np.abs(arr)
    amp = supnorm_decay(kappa, alpha_exp, d, t)
    out = amp * np.exp(-(rad**2) / (4.0 * t))
    return float(out) if out.ndim == 0 else out


def supnorm_decay(kappa: float, alpha_exp: float, d: int, t: float) -> float:
    """Sup norm of the vanishing solution: (4 pi t)^(-d/2) exp(-kappa (-ln t)^alpha)."""
    d = _check_dim(d)
    if kappa <= 0.0 or alpha_exp < 1.0:
        raise ValueError("require kappa > 0 and alpha_exp >= 1")
    if not 0.0 < t < 1.0:
        raise DriftDomainError(f"decay law defined for 0 < t < 1, got t = {t}")
    return (4.0 * math.pi * t) ** (-d / 2.0) * math.exp(-kappa * (-math.log(t)) ** alpha_exp)

"""Implicit Euler evolution for drift perturbed heat flow.

The package studies ``du/dt = lap(u) + b . grad(u) - c(t) u`` with
homogeneous Dirichlet data on the outer boundary.  Space is discretized
by a conservative finite volume Laplacian and first order upwinding of
the drift, so the step matrix ``I - dt A`` is an M-matrix: off diagonal
entries are nonpositive and every row is diagonally dominant with
margin at least one.  That structure is what makes the discrete flow
positivity preserving and a sup norm contraction, and the operator
checks it on every assembly instead of trusting the derivation.

Drift objects are sampled through a small protocol: anything with a
``sample(grid, t)`` method and a ``time_dependent`` attribute works.
``None`` means zero drift.  Radial samples are the signed coefficient
of the radial direction; tensor grids take ``(size, 3)`` vectors.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from math import gamma as _gamma_function

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .grids import RadialGrid, Tensor3Grid

__all__ = [
    "SolverError",
    "ScalarState",
    "Trajectory",
    "ArrayDrift",
    "StepOperator",
    "build_grid",
    "step",
    "evolve",
    "gradient",
    "lp_norm",
    "mixed_norm",
    "weighted_integral",
    "save_trajectory",
    "load_trajectory",
    "save_trajectory_csv",
]

_MAGIC = b"FLABTRJ1"


class SolverError(RuntimeError):
    """Raised when a step matrix or a linear solve fails validation."""


@dataclass
class ScalarState:
    """A scalar field at one instant."""

    time: float
    values: np.ndarray


class ArrayDrift:
    """Frozen samples on a fixed grid, for tests and adapters."""

    time_dependent = False

    def __init__(self, samples):
        self.samples = np.asarray(samples, dtype=float)

    def sample(self, grid, t):
        return self.samples


class Trajectory:
    """Stored frames of an evolution, in time order."""

    def __init__(self, grid, times, frames):
        times = np.asarray(times, dtype=float)
        frames = np.asarray(frames, dtype=float)
        if frames.ndim != 2 or frames.shape[0] != times.size:
            raise ValueError("frames must be (ntimes, grid.size)")
        if frames.shape[1] != grid.size:
            raise ValueError("frame width does not match the grid")
        self.grid = grid
        self.times = times
        self.frames = frames

    def __len__(self):
        return self.times.size

    def state(self, i):
        return ScalarState(self.times[i], self.frames[i])

    @property
    def final(self):
        return self.frames[-1]

    def index_at(self, t, tol=1e-9):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > tol:
            raise KeyError(f"no stored frame at t = {t}")
        return i

    def at_time(self, t, tol=1e-9):
        return self.frames[self.index_at(t, tol)]

    def sup_series(self):
        return np.max(np.abs(self.frames), axis=1)

    def lp_series(self, p):
        return np.array([lp_norm(f, self.grid, p) for f in self.frames])


def _surface_area(d):
    # Area of the unit sphere in R^d; radial norms integrate over the
    # full space, not just the ray.
    return 2.0 * np.pi ** (d / 2.0) / _gamma_function(d / 2.0)


def build_grid(spec):
    """Build a grid from a plain mapping, mirroring the config keys.

    ``{"kind": "radial", "d": 3, "r_max": 20, "n": 2048}`` or
    ``{"kind": "tensor3", "L": 4, "n": 64}``; radial specs accept the
    optional ``r_min`` and ``spacing`` keys.
    """
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "radial":
        allowed = {"d", "r_max", "n", "r_min", "spacing"}
        extra = set(spec) - allowed
        if extra:
            raise ValueError(f"unknown radial grid keys {sorted(extra)}")
        return RadialGrid(**spec)
    if kind == "tensor3":
        extra = set(spec) - {"L", "n"}
        if extra:
            raise ValueError(f"unknown tensor3 grid keys {sorted(extra)}")
        return Tensor3Grid(**spec)
    raise ValueError(f"unknown grid kind {kind!r}")


def _values_of(state):
    return state.values if isinstance(state, ScalarState) else np.asarray(state)


def lp_norm(values, grid, p):
    """L^p norm over the whole domain, with ``p = inf`` the sup norm."""
    values = _values_of(values)
    if np.isinf(p):
        return float(np.max(np.abs(values))) if values.size else 0.0
    if p < 1:
        raise ValueError("p must be at least 1, or inf")
    return _quasi_lp(values, grid, p)


def _quasi_lp(values, grid, p):
    # Same weighted sum as lp_norm but without the p >= 1 guard; the
    # iteration inequalities need exponents below one.
    values = np.asarray(values)
    weights = grid.node_volumes
    if grid.kind == "radial":
        weights = weights * _surface_area(grid.d)
    return float(np.sum(weights * np.abs(values) ** p) ** (1.0 / p))


def weighted_integral(values, grid):
    """Integral of ``values`` against the volume element."""
    weights = grid.node_volumes
    if grid.kind == "radial":
        weights = weights * _surface_area(grid.d)
    return float(np.sum(weights * np.asarray(values)))


def mixed_norm(traj, p_time, p_space, t_lo=None, t_hi=None):
    """Time norm of the spatial norms: ``L^{p_time}([t_lo, t_hi], L^{p_space})``.

    The time integral uses the trapezoid rule over the stored frames
    restricted to the window; ``p_time = inf`` takes the max.  Both
    exponents must be at least 1 (use inf for sup norms).
    """
    if not np.isinf(p_time) and p_time < 1:
        raise ValueError("p must be at least 1, or inf")
    space, t = _space_norm_series(traj, p_space, t_lo, t_hi, lp_norm)
    if np.isinf(p_time):
        return float(np.max(space))
    if t.size == 1:
        raise ValueError("time integral needs at least two frames")
    return float(np.trapezoid(space**p_time, t) ** (1.0 / p_time))


def _mixed_quasi(traj, p_time, p_space, t_lo=None, t_hi=None):
    # Mixed functional without the exponent >= 1 guard, for iteration
    # inequalities whose exponents drop below one.
    def qn(values, grid, p):
        values = _values_of(values)
        return (
            float(np.max(np.abs(values)))
            if np.isinf(p)
            else _quasi_lp(values, grid, p)
        )

    space, t = _space_norm_series(traj, p_space, t_lo, t_hi, qn)
    if np.isinf(p_time):
        return float(np.max(space))
    if t.size == 1:
        raise ValueError("time integral needs at least two frames")
    return float(np.trapezoid(space**p_time, t) ** (1.0 / p_time))


def _space_norm_series(traj, p_space, t_lo, t_hi, norm):
    times = traj.times
    mask = np.ones(times.size, dtype=bool)
    if t_lo is not None:
        mask &= times >= t_lo - 1e-12
    if t_hi is not None:
        mask &= times <= t_hi + 1e-12
    if not np.any(mask):
        raise ValueError("no stored frames in the requested window")
    space = np.array([norm(f, traj.grid, p_space) for f in traj.frames[mask]])
    return space, times[mask]


def gradient(values, grid):
    """Finite difference gradient of a state.

    Radial grids return the signed radial derivative, shape ``(n,)``,
    with centered differences inside and one sided stencils at the two
    ends.  Tensor grids return ``(size, 3)`` with the same stencils per
    axis, never reaching across the boundary into the ghost layer.
    """
    values = np.asarray(_values_of(values), dtype=float)
    if grid.kind == "radial":
        r = grid.radii
        out = np.empty_like(values)
        out[1:-1] = (values[2:] - values[:-2]) / (r[2:] - r[:-2])
        out[0] = (values[1] - values[0]) / (r[1] - r[0])
        out[-1] = (values[-1] - values[-2]) / (r[-1] - r[-2])
        return out
    cube = grid.reshape(values)
    h = grid.h
    out = np.empty((3,) + cube.shape)
    for axis in range(3):
        g = np.empty_like(cube)
        mid = [slice(None)] * 3
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        mid[axis] = slice(1, -1)
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        g[tuple(mid)] = (cube[tuple(hi)] - cube[tuple(lo)]) / (2.0 * h)
        first, second = [slice(None)] * 3, [slice(None)] * 3
        first[axis], second[axis] = 0, 1
        g[tuple(first)] = (cube[tuple(second)] - cube[tuple(first)]) / h
        first[axis], second[axis] = -1, -2
        g[tuple(first)] = (cube[tuple(first)] - cube[tuple(second)]) / h
        out[axis] = g
    return out.reshape(3, -1).T


class StepOperator:
    """One implicit Euler step ``(I - dt A) u_next = u``.

    ``A`` collects the finite volume Laplacian, upwinded advection for
    the given drift samples, and an optional nonnegative damping rate.
    Assembly validates the M-matrix structure and raises ``SolverError``
    if it is broken, since positivity and the sup norm contraction both
    rest on it.
    """

    def __init__(self, grid, dt, drift_values=None, damping_rate=0.0):
        if dt <= 0:
            raise SolverError("time step must be positive")
        if damping_rate < 0:
            raise SolverError("damping rate must be nonnegative")
        self.grid = grid
        self.dt = float(dt)
        self.damping_rate = float(damping_rate)
        if grid.kind == "radial":
            if grid.r_min != 0.0 or grid.spacing != "uniform":
                raise SolverError(
                    "evolution needs a uniform radial grid starting at 0"
                )
            self._build_radial(drift_values)
        elif grid.kind == "tensor3":
            self._build_tensor3(drift_values)
        else:
            raise SolverError(f"unsupported grid kind {grid.kind!r}")
        self._validate()

    # -- assembly -----------------------------------------------------

    def _build_radial(self, drift_values):
        grid = self.grid
        n, h, d = grid.n, grid.h, grid.d
        vol = grid.node_volumes
        faces = grid.nodes[:-1] + 0.5 * h
        cond = faces ** (d - 1) / h

        lower = np.zeros(n)
        diag = np.zeros(n)
        upper = np.zeros(n)

        # Laplacian: flux differences of r^(d-1) u' over owned volumes.
        east = cond / vol
        west = np.concatenate(([0.0], cond[:-1])) / vol
        diag -= east + west
        upper[1:] += east[:-1]
        lower[:-1] += west[1:]
        # the east flux of the last unknown points at the Dirichlet node
        # and its neighbor entry is dropped, not its diagonal part.

        if drift_values is not None:
            b = np.asarray(drift_values, dtype=float)
            if b.shape != (n,):
                raise SolverError("radial drift samples must have shape (n,)")
            if not np.all(np.isfinite(b)):
                raise SolverError("drift samples must be finite")
            pos = np.maximum(b, 0.0)
            neg = np.minimum(b, 0.0)
            # outward coefficient looks forward, inward looks backward
            diag -= pos / h
            upper[1:] += pos[:-1] / h
            diag += neg / h
            lower[:-1] -= neg[1:] / h
            # at the origin the backward neighbor is the mirror image of
            # the forward one, so inward drift couples node 0 to node 1
            upper[1] -= neg[0] / h

        diag -= self.damping_rate

        self._banded = np.zeros((3, n))
        self._banded[0, 1:] = -self.dt * upper[1:]
        self._banded[1] = 1.0 - self.dt * diag
        self._banded[2, :-1] = -self.dt * lower[:-1]
        self._mode = "banded"

    def _build_tensor3(self, drift_values):
        grid = self.grid
        n, h = grid.n, grid.h
        N = grid.size
        idx = np.arange(N).reshape(n, n, n)
        dt = self.dt

        if drift_values is None:
            b = None
        else:
            b = np.asarray(drift_values, dtype=float)
            if b.shape != (N, 3):
                raise SolverError("tensor drift samples must be (size, 3)")
            if not np.all(np.isfinite(b)):
                raise SolverError("drift samples must be finite")

        rows, cols, vals = [], [], []
        diag = np.full(N, -6.0 / h**2)
        for axis, stride in ((0, n * n), (1, n), (2, 1)):
            sl = [slice(None)] * 3
            sl[axis] = slice(0, n - 1)
            src = idx[tuple(sl)].ravel()
            fwd = src + stride
            lap = np.full(src.size, 1.0 / h**2)
            up_fwd = np.zeros(src.size)
            up_bwd = np.zeros(src.size)
            if b is not None:
                comp = b[:, axis]
                # forward neighbor entry of row `src` carries the
                # outward upwind part; backward entry of row `fwd` the
                # inward part.  Missing neighbors hit the zero ghost
                # layer: the diagonal keeps the full upwind term.
                up_fwd = np.maximum(comp[src], 0.0) / h
                up_bwd = -np.minimum(comp[fwd], 0.0) / h
            rows.append(src)
            cols.append(fwd)
            vals.append(lap + up_fwd)
            rows.append(fwd)
            cols.append(src)
            vals.append(lap + up_bwd)
            if b is not None:
                comp = b[:, axis]
                diag -= np.maximum(comp, 0.0) / h
                diag += np.minimum(comp, 0.0) / h

        diag -= self.damping_rate
        rows.append(np.arange(N))
        cols.append(np.arange(N))
        vals.append(diag)

        data = np.concatenate([-dt * v for v in vals])
        data[-N:] = 1.0 - dt * diag
        matrix = scipy.sparse.csr_matrix(
            (data, (np.concatenate(rows), np.concatenate(cols))), shape=(N, N)
        )
        self._matrix = matrix
        self._mode = "sparse"

    # -- validation and solve ----------------------------------------

    def _validate(self):
        diag = self.diagnostics()
        # tolerances scale with the entry magnitude: dominance is an
        # exact cancellation of terms of size dt/h^2
        scale = max(1.0, diag["min_diag"], -diag["min_diag"])
        if diag["max_offdiag"] > 1e-13 * scale:
            raise SolverError(
                f"positive off diagonal entry {diag['max_offdiag']:.3e}"
            )
        if diag["min_dominance"] < 1.0 - 1e-12 * scale:
            raise SolverError(
                f"diagonal dominance margin {diag['min_dominance']:.3e} below 1"
            )

    def diagnostics(self):
        """Structure report: off diagonal sign and dominance margin."""
        if self._mode == "banded":
            sup = self._banded[0]  # sup[k] = M[k-1, k] for k >= 1
            sub = self._banded[2]  # sub[k] = M[k+1, k] for k <= n-2
            off_max = max(sup[1:].max(), sub[:-1].max())
            off_abs = np.zeros(self._banded.shape[1])
            off_abs[:-1] += np.abs(sup[1:])
            off_abs[1:] += np.abs(sub[:-1])
            dominance = self._banded[1] - off_abs
            return {
                "max_offdiag": float(off_max),
                "min_diag": float(self._banded[1].min()),
                "min_dominance": float(dominance.min()),
            }
        m = self._matrix
        d = m.diagonal()
        off_abs = np.abs(m).sum(axis=1).A1 - np.abs(d)
        coo = m.tocoo()
        mask = coo.row != coo.col
        off_max = float(coo.data[mask].max()) if np.any(mask) else 0.0
        return {
            "max_offdiag": off_max,
            "min_diag": float(d.min()),
            "min_dominance": float((d - off_abs).min()),
        }

    def apply_inverse(self, rhs):
        rhs = np.asarray(rhs, dtype=float)
        if self._mode == "banded":
            return scipy.linalg.solve_banded(
                (1, 1), self._banded, rhs, check_finite=False
            )
        norm = np.linalg.norm(rhs)
        if norm == 0.0:
            return np.zeros_like(rhs)
        x, _ = scipy.sparse.linalg.bicgstab(
            self._matrix, rhs, x0=rhs, rtol=1e-14, atol=0.0, maxiter=600
        )
        residual = np.linalg.norm(self._matrix @ x - rhs) / norm
        if residual > 1e-11:
            raise SolverError(f"linear solve stalled at residual {residual:.3e}")
        return x


def _store_mask(nsteps, store):
    keep = np.zeros(nsteps + 1, dtype=bool)
    keep[0] = keep[-1] = True
    if store == "all":
        keep[:] = True
    elif store == "ends":
        pass
    elif isinstance(store, int) and store > 0:
        keep[::store] = True
    else:
        raise ValueError("store must be 'all', 'ends', or a positive stride")
    return keep


def step(op, state):
    """Advance one implicit step, returning the new ``ScalarState``."""
    return ScalarState(state.time + op.dt, op.apply_inverse(state.values))


def evolve(grid, drift, initial, t_start, t_end, dt, damping=None, store="all"):
    """Run implicit Euler from ``t_start`` to ``t_end``.

    ``drift`` is ``None`` or a sampling object; ``damping`` is ``None``
    or a callable returning the nonnegative rate ``c(t)``.  Both are
    frozen at the left endpoint of each step; the freezing error is
    first order in ``dt`` and is measured by the checks rather than
    assumed away.  The interval must be an integer number of steps.
    ``store`` controls which frames are kept: every frame, just the
    endpoints, or every k-th frame (endpoints always included).
    """
    if t_end < t_start:
        raise ValueError("t_end must not precede t_start")
    values = np.array(_values_of(initial), dtype=float)
    if values.shape != (grid.size,):
        raise ValueError("initial state does not match the grid")
    span = t_end - t_start
    if span == 0.0:
        return Trajectory(grid, np.array([t_start]), values[None, :])
    nsteps = int(round(span / dt))
    if nsteps < 1 or abs(nsteps * dt - span) > 1e-9 * max(1.0, abs(span)):
        raise ValueError("interval must be an integer number of steps")

    keep = _store_mask(nsteps, store)
    times = [t_start]
    frames = [values.copy()]

    static = drift is None or not getattr(drift, "time_dependent", True)
    operator = None
    for k in range(1, nsteps + 1):
        t_left = t_start + (k - 1) * dt
        rate = float(damping(t_left)) if damping is not None else 0.0
        if operator is None or not static or damping is not None:
            samples = drift.sample(grid, t_left) if drift is not None else None
            operator = StepOperator(grid, dt, samples, rate)
        values = operator.apply_inverse(values)
        if keep[k]:
            times.append(t_start + k * dt)
            frames.append(values.copy())
    return Trajectory(grid, np.array(times), np.vstack(frames))


# -- persistence ------------------------------------------------------


def _grid_from_descriptor(desc):
    kind = desc.get("kind")
    if kind == "radial":
        return RadialGrid(
            desc["d"],
            desc["r_max"],
            desc["n"],
            r_min=desc.get("r_min", 0.0),
            spacing=desc.get("spacing", "uniform"),
        )
    if kind == "tensor3":
        return Tensor3Grid(desc["L"], desc["n"])
    raise ValueError(f"unknown grid kind {kind!r}")


def save_trajectory(traj, path):
    """Binary dump: magic, JSON header, times, then frames row major.

    The header records the grid descriptor and array shapes, so the
    file reloads without outside context, bit for bit.
    """
    header = {
        "grid": traj.grid.descriptor(),
        "nframes": int(traj.times.size),
        "size": int(traj.grid.size),
        "dtype": "<f8",
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(traj.times, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(traj.frames, dtype="<f8").tobytes())


def load_trajectory(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError("not a trajectory file")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        nframes = header["nframes"]
        size = header["size"]
        times = np.frombuffer(fh.read(8 * nframes), dtype="<f8")
        frames = np.frombuffer(fh.read(8 * nframes * size), dtype="<f8")
    grid = _grid_from_descriptor(header["grid"])
    return Trajectory(grid, times.copy(), frames.reshape(nframes, size).copy())


def save_trajectory_csv(traj, path):
    """Delimited dump in long form: one ``time,node,value`` row per node.

    Grid descriptor comments precede the header so the file stands on
    its own.  Values use shortest round trip formatting, which keeps
    repeated runs byte identical.
    """
    desc = traj.grid.descriptor()
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(desc):
            fh.write(f"# {key} = {desc[key]}\n")
        fh.write("time,node,value\n")
        for t, row in zip(traj.times, traj.frames):
            ts = repr(float(t))
            for i, v in enumerate(row):
                fh.write(f"{ts},{i},{float(v)!r}\n")

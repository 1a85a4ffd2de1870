"""Spatial discretizations for the radial and three dimensional solvers.

Two grid families cover everything the package needs.  ``RadialGrid``
discretizes a radially symmetric problem on ``[r_min, r_max]`` with the
d-dimensional volume element r^(d-1) dr, either uniformly or with
geometric spacing that concentrates nodes near an inner cutoff.
``Tensor3Grid`` is a cell centered cube in three dimensions with zero
Dirichlet data imposed through ghost values outside the box.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RadialGrid", "Tensor3Grid"]


class RadialGrid:
    """Nodes ``r_0 < r_1 < ... < r_n`` on ``[r_min, r_max]``.

    The unknowns live at nodes ``0 .. n-1``; the outer node carries
    homogeneous Dirichlet data.  With ``r_min == 0`` the first node sits
    at the origin and the evolution operator uses the regularity
    condition there.  With ``r_min > 0`` the first node is a free
    endpoint, which is the right choice for quadratic form studies on a
    punctured domain.

    Parameters
    ----------
    d : int
        Ambient dimension, at least 3.  Enters only through the volume
        element ``r**(d-1)``.
    r_max : float
        Outer radius.
    n : int
        Number of intervals; there are ``n`` unknowns.
    r_min : float, optional
        Inner cutoff, default 0.
    spacing : str, optional
        ``"uniform"`` or ``"geometric"``.  Geometric spacing requires a
        positive inner cutoff.
    """

    kind = "radial"

    def __init__(self, d, r_max, n, r_min=0.0, spacing="uniform"):
        d = int(d)
        n = int(n)
        if d < 3:
            raise ValueError("dimension must be at least 3")
        if n < 16:
            raise ValueError("need at least 16 intervals")
        if not 0.0 <= r_min < r_max:
            raise ValueError("require 0 <= r_min < r_max")
        if spacing not in ("uniform", "geometric"):
            raise ValueError(f"unknown spacing {spacing!r}")
        if spacing == "geometric" and r_min <= 0.0:
            raise ValueError("geometric spacing needs r_min > 0")
        self.d = d
        self.r_max = float(r_max)
        self.r_min = float(r_min)
        self.n = n
        self.spacing = spacing
        if spacing == "uniform":
            self.nodes = np.linspace(self.r_min, self.r_max, n + 1)
            self.h = (self.r_max - self.r_min) / n
        else:
            self.nodes = np.geomspace(self.r_min, self.r_max, n + 1)
            self.h = None
        self.edge_lengths = np.diff(self.nodes)
        self._volumes = self._node_volumes()

    def _node_volumes(self):
        # Owned volume of node j: the slab between the midpoints of the
        # adjacent edges, with the exact r^(d-1) weight integrated.  The
        # first and last nodes own half cells clipped at the endpoints.
        mid = 0.5 * (self.nodes[1:] + self.nodes[:-1])
        lo = np.concatenate(([self.nodes[0]], mid))
        hi = np.concatenate((mid, [self.nodes[-1]]))
        vol = (hi**self.d - lo**self.d) / self.d
        return vol[:-1]

    @property
    def radii(self):
        """Radii of the unknowns, shape ``(n,)``."""
        return self.nodes[:-1]

    @property
    def node_volumes(self):
        """Quadrature weights for the unknowns, exact for r^(d-1) dr."""
        return self._volumes

    @property
    def edge_volumes(self):
        """Exact volume of each interval, ``(r_{j+1}^d - r_j^d) / d``."""
        return (self.nodes[1:] ** self.d - self.nodes[:-1] ** self.d) / self.d

    @property
    def size(self):
        return self.n

    def points(self):
        """Unknown locations as ``(n, d)`` coordinates on the first axis."""
        pts = np.zeros((self.n, self.d))
        pts[:, 0] = self.radii
        return pts

    def descriptor(self):
        return {
            "kind": self.kind,
            "d": self.d,
            "n": self.n,
            "r_min": self.r_min,
            "r_max": self.r_max,
            "spacing": self.spacing,
        }

    def __repr__(self):
        return (
            f"RadialGrid(d={self.d}, r_max={self.r_max}, n={self.n}, "
            f"r_min={self.r_min}, spacing={self.spacing!r})"
        )


class Tensor3Grid:
    """Cell centered grid on the cube ``[-L, L]^3``.

    Each axis carries ``n`` cells of width ``h = 2 L / n`` with centers
    at ``-L + (i + 1/2) h``.  States are stored flattened in C order, so
    the index of cell ``(i, j, k)`` is ``i n^2 + j n + k`` and the z
    index varies fastest.  The boundary condition is homogeneous
    Dirichlet through zero ghost cells.
    """

    kind = "tensor3"
    d = 3

    def __init__(self, L, n):
        n = int(n)
        if n < 16:
            raise ValueError("need at least 16 cells per axis")
        if L <= 0:
            raise ValueError("half width must be positive")
        self.L = float(L)
        self.n = n
        self.h = 2.0 * self.L / n
        self.axis = -self.L + (np.arange(n) + 0.5) * self.h

    @property
    def size(self):
        return self.n**3

    @property
    def node_volumes(self):
        return np.full(self.size, self.h**3)

    def points(self):
        """Cell centers as ``(n^3, 3)``, flattened in C order."""
        x, y, z = np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")
        return np.column_stack([x.ravel(), y.ravel(), z.ravel()])

    def reshape(self, values):
        """View a flat state as an ``(n, n, n)`` array."""
        return np.asarray(values).reshape(self.n, self.n, self.n)

    def descriptor(self):
        return {"kind": self.kind, "L": self.L, "n": self.n}

    def __repr__(self):
        return f"Tensor3Grid(L={self.L}, n={self.n})"

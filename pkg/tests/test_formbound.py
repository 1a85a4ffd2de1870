"""Form bound estimator tests.

The oracle for the power iteration is a dense generalized eigensolve of
the same matrices; analytic anchors are the unit ball eigenvalue pi^2
and the inverse square weight whose continuum supremum is 4 at d = 3.
"""

import numpy as np
import numpy.testing as npt
import pytest
import scipy.linalg

from fellerlab.drifts import HardyDrift, SplitDrift
from fellerlab.formbound import (
    CSV_HEADER,
    FormBoundReport,
    assemble_matrices,
    estimate_beta,
    rayleigh,
    squared_weights,
)
from fellerlab.grids import RadialGrid, Tensor3Grid
from fellerlab.rng import stream


def dense_top_eigenvalue(grid, weights):
    stiff, mass = assemble_matrices(grid, weights)
    n = grid.n
    K = np.diag(stiff[1])
    K += np.diag(stiff[0][1:], 1) + np.diag(stiff[0][1:], -1)
    vals = scipy.linalg.eigh(np.diag(mass), K, eigvals_only=True)
    return vals[-1]


def hardy_grid(eps=1e-3, R=50.0, n=512):
    return RadialGrid(3, R, n, r_min=eps, spacing="geometric")


class TestRayleigh:
    def test_zero_weight(self):
        g = RadialGrid(3, 1.0, 256)
        phi = np.sin(np.pi * g.radii)
        assert rayleigh(np.zeros(g.n), phi, g) == 0.0

    def test_ball_eigenfunction(self):
        # phi = sin(pi r)/r gives the quotient 1/pi^2 in closed form
        g = RadialGrid(3, 1.0, 2048)
        r = g.radii
        phi = np.full(g.n, np.pi)
        nz = r > 0
        phi[nz] = np.sin(np.pi * r[nz]) / r[nz]
        val = rayleigh(np.ones(g.n), phi, g)
        assert val == pytest.approx(1.0 / np.pi**2, rel=1e-4)

    def test_scaling_quadratic(self):
        g = RadialGrid(3, 2.0, 256)
        rng = stream(3, "rayleigh")
        b = rng.random(g.n)
        phi = np.sin(np.pi * g.radii / 2.0)
        assert rayleigh(3.0 * b, phi, g) == pytest.approx(
            9.0 * rayleigh(b, phi, g), rel=1e-12
        )

    def test_rejects_zero_phi(self):
        g = RadialGrid(3, 1.0, 64)
        with pytest.raises(ValueError):
            rayleigh(np.ones(g.n), np.zeros(g.n), g)

    def test_vector_samples(self):
        g = RadialGrid(3, 1.0, 64)
        vec = np.tile([0.6, 0.8, 0.0], (g.n, 1))
        npt.assert_allclose(squared_weights(vec), 1.0, rtol=1e-14)


class TestEstimateBeta:
    def test_zero_field(self):
        g = RadialGrid(3, 1.0, 128)
        rep = estimate_beta(np.zeros(g.n), g)
        assert rep.beta_hat == 0.0
        assert rep.converged
        assert rep.iterations == 0

    def test_unit_ball_oracle(self):
        g = RadialGrid(3, 1.0, 2048)
        rep = estimate_beta(np.ones(g.n), g)
        assert rep.beta_hat == pytest.approx(1.0 / np.pi**2, abs=1e-3)
        assert rep.converged
        assert rep.residual <= 1e-10

    def test_matches_dense_oracle_hardy(self):
        g = hardy_grid(n=300)
        b = 1.0 / g.radii
        rep = estimate_beta(b, g, tol=1e-12)
        assert rep.beta_hat == pytest.approx(
            dense_top_eigenvalue(g, b * b), rel=1e-8
        )

    def test_matches_dense_oracle_random(self):
        g = RadialGrid(3, 3.0, 200)
        w = stream(5, "weights").random(g.n) + 0.1
        rep = estimate_beta(np.sqrt(w), g, tol=1e-12)
        assert rep.beta_hat == pytest.approx(dense_top_eigenvalue(g, w), rel=1e-8)

    def test_maximizer_consistency(self):
        g = hardy_grid(n=400)
        b = 1.0 / g.radii
        rep = estimate_beta(b, g, tol=1e-11)
        assert rayleigh(b, rep.maximizer, g) == pytest.approx(
            rep.beta_hat, rel=1e-9
        )

    def test_scaling_invariant(self):
        g = hardy_grid(n=400)
        b = 1.0 / g.radii
        one = estimate_beta(b, g, seed=9)
        scaled = estimate_beta(0.3 * b, g, seed=9)
        assert scaled.beta_hat == pytest.approx(0.09 * one.beta_hat, rel=1e-8)

    def test_deterministic(self):
        g = hardy_grid(n=300)
        b = 1.0 / g.radii
        a = estimate_beta(b, g, seed=4)
        c = estimate_beta(b, g, seed=4)
        assert a.beta_hat == c.beta_hat
        npt.assert_array_equal(a.maximizer, c.maximizer)

    def test_domain_monotonicity(self):
        # enlarging the outer radius only adds trial functions
        vals = []
        for R in (10.0, 25.0, 50.0):
            g = hardy_grid(R=R, n=1024)
            vals.append(estimate_beta(1.0 / g.radii, g).beta_hat)
        assert vals[0] < vals[1] < vals[2]

    def test_hardy_below_sharp_constant(self):
        for eps in (1e-3, 5e-4):
            g = hardy_grid(eps=eps, n=1024)
            assert estimate_beta(1.0 / g.radii, g).beta_hat < 4.0

    def test_split_reduces_to_hardy(self):
        g = hardy_grid(n=512)
        hardy = HardyDrift(1.0, 3)
        split = SplitDrift(1.0, 0.0, 3, 0)
        bh = np.abs(hardy.radial_profile(0.0, g.radii))
        bs = np.abs(split.radial_profile(0.0, g.radii))
        rh = estimate_beta(bh, g, seed=2)
        rs = estimate_beta(bs, g, seed=2)
        assert abs(rh.beta_hat - rs.beta_hat) <= 1e-10

    def test_csv_row(self):
        g = RadialGrid(3, 1.0, 128)
        rep = estimate_beta(np.ones(g.n), g)
        row = rep.csv_row()
        assert len(row.split(",")) == len(CSV_HEADER.split(","))
        assert "kind=radial" in row
        assert isinstance(rep, FormBoundReport)

    def test_validation(self):
        g = RadialGrid(3, 1.0, 64)
        with pytest.raises(ValueError):
            estimate_beta(np.ones(g.n - 1), g)
        with pytest.raises(ValueError):
            estimate_beta(np.full(g.n, np.nan), g)
        with pytest.raises(ValueError):
            assemble_matrices(g, -np.ones(g.n))
        with pytest.raises(ValueError):
            estimate_beta(np.ones(16**3), Tensor3Grid(1.0, 16))

    def test_unconverged_report(self):
        g = hardy_grid(n=512)
        rep = estimate_beta(1.0 / g.radii, g, tol=1e-13, max_iter=2)
        assert not rep.converged
        assert rep.iterations == 2
        assert rep.residual > 1e-13

"""Sampler tests: exact conditionals against quadrature, the spectral
Gaussian sampler against matrix inversion, chain invariants, and
reproducibility contracts."""

import math

import numpy as np
import pytest
import scipy.integrate
import scipy.stats

from glmax.greens import box_green_diag, green_direct
from glmax.lattice import RegionSpec, make_box, region
from glmax.potential import Potential, builtin
from glmax.sampler import (
    ChainConfig,
    ChainDiagnostics,
    Field,
    GibbsEnergy,
    SamplerError,
    conditional_site_sample,
    dgff_batch,
    dgff_exact,
    iter_chain_batches,
    max_over,
    mcmc_sample,
)
from glmax.seeding import replica_generator, replica_generators


def site_density_moments(p, neighbors, lim=12.0):
    """Quadrature oracle for the single-site conditional: (mean, var, Z)."""
    def dens(x):
        return math.exp(-sum(float(p.eval(np.float64(x - nb))) for nb in neighbors))

    z, _ = scipy.integrate.quad(dens, -lim, lim, limit=200)
    m1, _ = scipy.integrate.quad(lambda x: x * dens(x), -lim, lim, limit=200)
    m2, _ = scipy.integrate.quad(lambda x: x * x * dens(x), -lim, lim, limit=200)
    mean = m1 / z
    return mean, m2 / z - mean**2, z


class TestConditional:
    def test_quadratic_zero_neighbors(self):
        rng = replica_generator(1, 0, 0)
        xs = np.array([conditional_site_sample(builtin("quadratic"), (0, 0, 0, 0), rng) for _ in range(20000)])
        assert abs(xs.mean()) < 4 * 0.5 / math.sqrt(len(xs))
        assert abs(xs.var() - 0.25) < 4 * 0.25 * math.sqrt(2 / len(xs))

    def test_quadratic_translation(self):
        rng = replica_generator(2, 0, 0)
        xs = np.array([conditional_site_sample(builtin("quadratic"), (1, 1, 1, 1), rng) for _ in range(20000)])
        assert abs(xs.mean() - 1.0) < 4 * 0.5 / math.sqrt(len(xs))

    def test_logcosh_matches_quadrature(self):
        p = builtin("quad_logcosh", 1.0)
        rng = replica_generator(3, 0, 0)
        xs = np.array([conditional_site_sample(p, (0, 0, 0, 0), rng) for _ in range(30000)])
        _, var, _ = site_density_moments(p, (0, 0, 0, 0))
        se = var * math.sqrt(2 / len(xs))
        assert abs(xs.var() - var) < 3 * se

    def test_asymmetric_neighbors_match_quadrature(self):
        p = builtin("quad_sqrt", 0.8)
        nb = (0.3, -1.2, 2.0, 0.5)
        rng = replica_generator(4, 0, 0)
        xs = np.array([conditional_site_sample(p, nb, rng) for _ in range(30000)])
        mean, var, _ = site_density_moments(p, nb)
        assert abs(xs.mean() - mean) < 3 * math.sqrt(var / len(xs))
        assert abs(xs.var() - var) < 3 * var * math.sqrt(2 / len(xs))

    def test_detailed_balance_ks(self):
        # empirical law of the single-site chain vs the quadrature CDF
        p = builtin("quad_logcosh", 1.0)
        rng = replica_generator(5, 0, 0)
        xs = np.array([conditional_site_sample(p, (0, 0, 0, 0), rng) for _ in range(30000)])
        grid = np.linspace(-6, 6, 4001)
        dens = np.exp(-4 * (0.5 * grid**2 + np.log(np.cosh(grid))))
        cdf_vals = np.cumsum(dens)
        cdf_vals /= cdf_vals[-1]
        stat, pval = scipy.stats.kstest(xs, lambda x: np.interp(x, grid, cdf_vals))
        assert pval > 0.01

    def test_wrong_arity(self):
        with pytest.raises(SamplerError):
            conditional_site_sample(builtin("quadratic"), (0, 0, 0), replica_generator(1, 0, 0))

    def test_newton_failure_signals_bad_potential(self):
        bad = Potential(
            name="broken",
            eval=lambda x: 0.5 * np.square(x),
            grad=lambda x: np.ones_like(np.asarray(x, dtype=float)),  # no root
            hess=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            c_minus=1.0,
            c_plus=1.0,
        )
        with pytest.raises(SamplerError, match="converge"):
            conditional_site_sample(bad, (0, 0, 0, 0), replica_generator(1, 0, 0))


class TestDgffExact:
    def test_single_site_variance(self):
        rng = replica_generator(6, 0, 0)
        vals = np.array([dgff_exact(1, rng).at((0, 0)) for _ in range(30000)])
        assert abs(vals.var() - 0.25) < 3 * 0.25 * math.sqrt(2 / len(vals))
        assert abs(vals.mean()) < 3 * 0.5 / math.sqrt(len(vals))

    def test_covariance_matches_inverse_laplacian(self):
        gens = replica_generators(7, 0, 30000)
        batch = dgff_batch(2, gens)
        inner = batch[:, 1:-1, 1:-1].reshape(len(gens), -1)
        emp = np.cov(inner.T)
        exact = green_direct(make_box(2)).matrix()
        # SE of a sample covariance entry ~ sqrt((G_ii G_jj + G_ij^2)/R)
        se = np.sqrt((np.outer(exact.diagonal(), exact.diagonal()) + exact**2) / len(gens))
        assert np.abs(emp - exact).max() < 4 * se.max()
        assert (np.abs(emp - exact) / se).max() < 4.5

    def test_center_variance_matches_green_diag(self):
        n = 64
        gens = replica_generators(8, 0, 1500)
        batch = dgff_batch(n, gens)
        center = batch[:, n, n]
        exact = float(box_green_diag(make_box(n), np.array([[0, 0]]))[0])
        se = exact * math.sqrt(2 / len(gens))
        assert abs(center.var(ddof=1) - exact) < 3 * se

    def test_boundary_zero(self):
        f = dgff_exact(5, replica_generator(9, 0, 0))
        assert np.all(f.boundary_condition == 0.0)


class TestChain:
    def test_reproducible_from_seed(self):
        p = builtin("quad_logcosh", 1.0)
        cfg = ChainConfig(seed=11, burn_in_sweeps=5)
        a = mcmc_sample(p, make_box(3), 0.0, cfg, 3)
        b = mcmc_sample(p, make_box(3), 0.0, cfg, 3)
        for fa, fb in zip(a, b):
            assert np.array_equal(fa.values, fb.values)
        c = mcmc_sample(p, make_box(3), 0.0, ChainConfig(seed=12, burn_in_sweeps=5), 3)
        assert not np.array_equal(a[0].values, c[0].values)

    def test_chunking_invariance(self):
        # replica streams make results independent of the memory chunking
        p = builtin("quad_logcosh", 0.5)
        gens_a = replica_generators(13, 0, 6)
        gens_b = replica_generators(13, 0, 6)
        cfg = ChainConfig(seed=13, burn_in_sweeps=4)
        outs_a = np.concatenate([s for _, s in iter_chain_batches(p, make_box(3), 0.0, cfg, 2, gens_a)])
        outs_b = np.concatenate(
            [s for _, s in iter_chain_batches(p, make_box(3), 0.0, cfg, 2, gens_b, chunk_elems=100)]
        )
        assert np.array_equal(outs_a, outs_b)

    def test_acceptance_rate_envelope_bound(self):
        for p in (builtin("quad_logcosh", 1.0), builtin("quad_sqrt", 1.0)):
            diag = ChainDiagnostics()
            cfg = ChainConfig(seed=14, burn_in_sweeps=10)
            gens = replica_generators(14, 0, 4)
            for _ in iter_chain_batches(p, make_box(8), 0.0, cfg, 1, gens, diag=diag):
                pass
            assert diag.acceptance_rate >= 0.9 * math.sqrt(p.c_minus / p.c_plus)

    def test_constant_boundary_condition_mean(self):
        # with bc identically 5 the mean field is the constant harmonic extension
        p = builtin("quadratic")
        cfg = ChainConfig(seed=15, burn_in_sweeps=30)
        gens = replica_generators(15, 0, 400)
        sums = None
        count = 0
        for _, snaps in iter_chain_batches(p, make_box(3), 5.0, cfg, 1, gens):
            block = snaps[:, 0]
            sums = block.sum(axis=0) if sums is None else sums + block.sum(axis=0)
            count += len(block)
        mean_field = sums / count
        center_sd = math.sqrt(float(box_green_diag(make_box(3), np.array([[0, 0]]))[0]))
        assert np.abs(mean_field - 5.0).max() < 4 * center_sd / math.sqrt(count)

    def test_spin_flip_symmetry_skewness(self):
        p = builtin("quad_logcosh", 1.0)
        cfg = ChainConfig(seed=16, burn_in_sweeps=25)
        gens = replica_generators(16, 0, 3000)
        centers = []
        for _, snaps in iter_chain_batches(p, make_box(4), 0.0, cfg, 1, gens):
            centers.append(snaps[:, 0, 4, 4])
        x = np.concatenate(centers)
        skew = scipy.stats.skew(x)
        se = math.sqrt(6.0 / len(x))
        assert abs(skew) < 4 * se

    def test_raster_matches_checkerboard_statistics(self):
        p = builtin("quad_logcosh", 1.0)
        stats = {}
        for order in ("checkerboard", "raster"):
            cfg = ChainConfig(seed=17, burn_in_sweeps=30, thinning=3, sweep_order=order)
            fields = mcmc_sample(p, make_box(2), 0.0, cfg, 400)
            stats[order] = np.array([f.at((0, 0)) for f in fields])
        v1, v2 = stats["checkerboard"].var(ddof=1), stats["raster"].var(ddof=1)
        se = (v1 + v2) * math.sqrt(2 / 400)  # thinned samples correlate; generous
        assert abs(v1 - v2) < 4 * se

    def test_exact_vs_mcmc_agreement(self):
        # quadratic chain must reproduce the exact Gaussian law of the maximum
        reps = 1500
        for n in (4, 8):
            gens = replica_generators(18, 0, reps)
            exact_max = dgff_batch(n, gens)[:, 1:-1, 1:-1].reshape(reps, -1).max(axis=1)
            cfg = ChainConfig(seed=19, burn_in_sweeps=3 * n * n, init="zeros")
            mgens = replica_generators(19, 1, reps)
            chain_max = []
            for _, snaps in iter_chain_batches(builtin("quadratic"), make_box(n), 0.0, cfg, 1, mgens):
                chain_max.append(snaps[:, 0, 1:-1, 1:-1].reshape(len(snaps), -1).max(axis=1))
            chain_max = np.concatenate(chain_max)
            assert abs(exact_max.mean() - chain_max.mean()) < 3 * math.hypot(
                exact_max.std(ddof=1), chain_max.std(ddof=1)
            ) / math.sqrt(reps)
            assert scipy.stats.ks_2samp(exact_max, chain_max).pvalue > 0.01

    def test_wave_order_reference(self):
        # one half-sweep must equal a straightforward per-site reimplementation
        # consuming the same stream in the documented wave order
        p = builtin("quad_logcosh", 1.0)
        dom = make_box(2)
        cfg = ChainConfig(seed=20, burn_in_sweeps=0)
        gens = replica_generators(20, 0, 1)
        out = next(iter(iter_chain_batches(p, dom, 0.0, cfg, 1, gens)))[1][0, 0]

        gen = replica_generator(20, 0, 0)
        from glmax.sampler import _checkerboard_indices, _initial_state, _mode_newton_vec, _bc_grid

        values = _initial_state(p, dom, _bc_grid(dom, 0.0), cfg, gen)
        flat = values.reshape(-1)
        sigma = 1.0 / math.sqrt(4.0 * p.c_minus)
        for site_idx, nbr_idx in _checkerboard_indices(dom):
            nbrs = [flat[idx] for idx in nbr_idx]
            x_star = _mode_newton_vec(p, nbrs, sum(nbrs))
            psi_star = -sum(p.eval(x_star - nb) for nb in nbrs)
            res = np.full(len(site_idx), np.nan)
            active = np.ones(len(site_idx), dtype=bool)
            while active.any():
                idx = np.flatnonzero(active)
                z = gen.standard_normal(len(idx))
                u = gen.random(len(idx))
                for j, (k, zk, uk) in enumerate(zip(idx, z, u)):
                    y = x_star[k] + sigma * zk
                    la = 2 * p.c_minus * (y - x_star[k]) ** 2 - psi_star[k]
                    la -= sum(float(p.eval(np.float64(y - nb[k]))) for nb in nbrs)
                    if math.log(uk) < min(0.0, la):
                        res[k] = y
                        active[k] = False
            flat[site_idx] = res
        assert np.array_equal(out, values)


class TestFieldAndMax:
    def test_max_over_constant_field(self):
        dom = make_box(2)
        f = Field(dom, np.full((5, 5), 3.5))
        val, arg = max_over(f, region(dom, RegionSpec("full")))
        assert val == 3.5 and arg == (-2, -2)  # first in scan order

    def test_max_over_spike(self):
        dom = make_box(2)
        vals = np.zeros((5, 5))
        vals[3, 1] = 7.0  # lattice coordinate (1, -1)
        f = Field(dom, vals)
        val, arg = max_over(f, region(dom, RegionSpec("full")))
        assert val == 7.0 and tuple(arg) == (1, -1)

    def test_max_over_matches_rescan(self):
        dom = make_box(3)
        rng = np.random.default_rng(23)
        f = Field(dom, rng.standard_normal((7, 7)))
        coords = region(dom, RegionSpec("bulk", eps=0.3))
        val, arg = max_over(f, coords)
        brute = max(((f.at((x, y)), (x, y)) for x, y in coords), key=lambda t: t[0])
        assert val == brute[0] and tuple(arg) == brute[1]

    def test_empty_region_rejected(self):
        f = Field(make_box(2), np.zeros((5, 5)))
        with pytest.raises(Exception):
            max_over(f, np.empty((0, 2), dtype=int))

    def test_field_validates_shape_and_finiteness(self):
        with pytest.raises(Exception):
            Field(make_box(2), np.zeros((4, 5)))
        bad = np.zeros((5, 5))
        bad[2, 2] = np.inf
        with pytest.raises(SamplerError):
            Field(make_box(2), bad)

    def test_boundary_condition_extraction(self):
        dom = make_box(1)
        vals = np.arange(9.0).reshape(3, 3)
        ring = Field(dom, vals).boundary_condition
        assert len(ring) == 8 and 4.0 not in ring  # center value excluded


class TestChainConfig:
    def test_validation(self):
        with pytest.raises(SamplerError):
            ChainConfig(seed=1, thinning=0)
        with pytest.raises(SamplerError):
            ChainConfig(seed=1, sweep_order="diagonal")
        with pytest.raises(SamplerError):
            ChainConfig(seed=1, burn_in_sweeps=-1)
        with pytest.raises(SamplerError):
            ChainConfig(seed=1, init="hot")

    def test_default_burn_in_heuristic(self):
        # 20 * (2N)^2 site updates' worth of sweeps
        cfg = ChainConfig(seed=1)
        dom = make_box(8)
        expected = math.ceil(20 * 16 * 16 / dom.n_interior)
        assert cfg.resolved_burn_in(dom) == expected


class TestGibbsEnergy:
    def test_incremental_matches_recompute(self):
        p = builtin("quad_logcosh", 0.7)
        dom = make_box(3)
        rng = np.random.default_rng(29)
        f = Field(dom, rng.standard_normal((7, 7)))
        energy = GibbsEnergy.compute(f, p)
        for _ in range(25):
            site = (int(rng.integers(-2, 3)), int(rng.integers(-2, 3)))
            new_val = float(rng.standard_normal())
            energy = energy.updated(f, p, site, new_val)
            ix, iy = site[0] + 3, site[1] + 3
            f.values[ix, iy] = new_val
            fresh = GibbsEnergy.compute(f, p)
            assert abs(energy.total - fresh.total) <= 1e-9 * max(1.0, abs(fresh.total))

    def test_quadratic_value(self):
        dom = make_box(1)
        vals = np.zeros((3, 3))
        vals[1, 1] = 2.0
        f = Field(dom, vals)
        e = GibbsEnergy.compute(f, builtin("quadratic"))
        assert abs(e.total - 4 * 0.5 * 4.0) < 1e-12  # four bonds of gradient 2

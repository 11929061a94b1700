"""Samplers for the gradient Gibbs measure on a box.

The measure on fields phi over a box D with boundary condition b is

    dmu ~ exp[ - sum_{edges (v, v+e_i) in D} V(phi(v+e_i) - phi(v)) ]
          x prod_{interior} dphi(v) x prod_{boundary} delta_b(phi(v)).

Two samplers are provided:

* ``mcmc_sample``: heat-bath Markov chain.  Each interior site is resampled
  from its exact full conditional, whose density given the four neighbor
  values n_1..n_4 is proportional to exp(-sum_i V(x - n_i)).  The
  conditional is strictly log-concave with curvature in [4 c_minus,
  4 c_plus], so an exact rejection sampler applies: find the mode x* by
  safeguarded Newton, propose from the Gaussian N(x*, 1/(4 c_minus)), and
  accept with probability exp(psi(x) - psi(x*) + 2 c_minus (x - x*)^2),
  which lies in [0, 1] by the curvature lower bound.  The average
  acceptance rate is at least sqrt(c_minus / c_plus).

* ``dgff_exact``: for the quadratic potential the field is Gaussian with
  covariance the inverse Dirichlet Laplacian, and is synthesized exactly in
  the sine eigenbasis: on the MxM interior grid (M = 2N-1) the eigenvalues
  are lam_{jk} = 4 - 2 cos(j pi/(M+1)) - 2 cos(k pi/(M+1)) and the field is
  the DST-I of independent N(0, 1/lam_{jk}) amplitudes, computed by the
  fast O(M^2 log M) transform.

Chains are reproducible: each replica owns a PCG64 stream (see
``seeding``), and within a half-sweep variates are consumed in fixed
rejection-wave order (all active sites' normals, then their uniforms, in
flat site order), so runs are bit-identical for a given configuration
regardless of replica batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
import scipy.fft

from .lattice import Coord, Domain, LatticeError, make_box
from .potential import Potential

__all__ = [
    "Field",
    "ChainConfig",
    "GibbsEnergy",
    "SamplerError",
    "conditional_site_sample",
    "mcmc_sample",
    "dgff_exact",
    "dgff_batch",
    "max_over",
    "iter_chain_batches",
    "ChainDiagnostics",
]

_NEWTON_MAX_ITER = 100
_NEWTON_TOL = 1e-11


class SamplerError(RuntimeError):
    """Sampling failure (e.g. mode search did not converge)."""


@dataclass
class Field:
    """A field configuration on a box domain, grid-indexed values[ix, iy]."""

    domain: Domain
    values: np.ndarray

    def __post_init__(self):
        expected = (self.domain.side[0] + 1, self.domain.side[1] + 1)
        if self.values.shape != expected:
            raise LatticeError(f"values shape {self.values.shape} != grid {expected}")
        if not np.all(np.isfinite(self.values)):
            raise SamplerError("field contains non-finite values")

    @property
    def boundary_condition(self) -> np.ndarray:
        """Ring values aligned with domain.boundary_coords()."""
        bd = self.domain.boundary_coords()
        return self.values[bd[:, 0] - self.domain.origin.x, bd[:, 1] - self.domain.origin.y]

    def at(self, v) -> float:
        ix, iy = self.domain.index_of(np.asarray([v[0], v[1]]).reshape(1, 2))
        return float(self.values[ix[0], iy[0]])


@dataclass(frozen=True)
class ChainConfig:
    """Heat-bath chain parameters.  Seeds are mandatory (no clock default).

    ``burn_in_sweeps=None`` applies the default heuristic of 20 * (2N)^2
    site-updates' worth of sweeps (about 20 sweeps on a box of half-side N).
    ``init='gaussian_warm'`` starts from an exact Gaussian field scaled by
    1/sqrt((c_minus+c_plus)/2) plus the harmonic extension of the boundary
    data, which removes most of the large-scale transient; ``init='zeros'``
    is the cold start.
    """

    seed: int
    burn_in_sweeps: int | None = None
    thinning: int = 1
    sweep_order: str = "checkerboard"
    init: str = "gaussian_warm"

    def __post_init__(self):
        if self.thinning < 1:
            raise SamplerError(f"thinning must be >= 1, got {self.thinning}")
        if self.burn_in_sweeps is not None and self.burn_in_sweeps < 0:
            raise SamplerError("burn_in_sweeps must be nonnegative")
        if self.sweep_order not in ("checkerboard", "raster"):
            raise SamplerError(f"unknown sweep order {self.sweep_order!r}")
        if self.init not in ("gaussian_warm", "zeros"):
            raise SamplerError(f"unknown init {self.init!r}")

    def resolved_burn_in(self, dom: Domain) -> int:
        if self.burn_in_sweeps is not None:
            return self.burn_in_sweeps
        return math.ceil(20.0 * dom.side[0] * dom.side[1] / dom.n_interior)


@dataclass
class ChainDiagnostics:
    """Aggregate rejection-sampler statistics for a batch of chains."""

    proposals: int = 0
    accepted: int = 0
    site_updates: int = 0

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else float("nan")


# ---------------------------------------------------------------------------
# Exact single-site conditional
# ---------------------------------------------------------------------------


def _mode_newton_vec(p: Potential, nbrs: list[np.ndarray], total: np.ndarray) -> np.ndarray:
    """Vectorized safeguarded Newton for the conditional mode.

    Solves sum_i V'(x - n_i) = 0; the root lies in [min n, max n] and the
    curvature is in [4 c_minus, 4 c_plus], so clipped Newton converges.
    Only not-yet-converged sites keep iterating.
    """
    gh = p.grad_hess if p.grad_hess is not None else (lambda d: (p.grad(d), p.hess(d)))
    shape = np.shape(total)
    flat_x = np.ravel(0.25 * np.asarray(total, dtype=float)).copy()
    act = np.arange(flat_x.size)
    nb_flat = [np.ravel(np.asarray(n, dtype=float)) for n in nbrs]
    lo_f = np.minimum.reduce(nb_flat)
    hi_f = np.maximum.reduce(nb_flat)
    for _ in range(_NEWTON_MAX_ITER):
        xa = flat_x[act]
        fp = np.zeros_like(xa)
        fpp = np.zeros_like(xa)
        for n in nb_flat:
            g, h = gh(xa - n[act])
            fp += g
            fpp += h
        xa = np.clip(xa - fp / fpp, lo_f[act], hi_f[act])
        flat_x[act] = xa
        live = np.abs(fp) > _NEWTON_TOL
        if not live.any():
            return flat_x.reshape(shape)
        act = act[live]
    raise SamplerError(
        f"conditional mode search did not converge in {_NEWTON_MAX_ITER} iterations; "
        "potential derivatives are likely inconsistent"
    )


def _neg_energy(p: Potential, x, nbrs) -> np.ndarray:
    """psi(x) = -sum_i V(x - n_i), the conditional log-density up to a constant."""
    out = np.zeros_like(x)
    for n in nbrs:
        out -= p.eval(x - n)
    return out


def conditional_site_sample(p: Potential, neighbor_values: Sequence[float], rng: np.random.Generator) -> float:
    """Exact draw from the single-site conditional given 4 neighbor values.

    Rejection from the Gaussian envelope at the conditional mode; consumes
    one (normal, uniform) pair per proposal.
    """
    nbrs = [np.float64(v) for v in neighbor_values]
    if len(nbrs) != 4:
        raise SamplerError(f"expected 4 neighbor values, got {len(nbrs)}")
    total = np.float64(sum(nbrs))
    x_star = _mode_newton_vec(p, [np.asarray(n) for n in nbrs], np.asarray(total))
    x_star = float(x_star)
    sigma = 1.0 / math.sqrt(4.0 * p.c_minus)
    psi_star = float(_neg_energy(p, np.float64(x_star), nbrs))
    while True:
        y = x_star + sigma * rng.standard_normal()
        u = rng.random()
        log_acc = float(_neg_energy(p, np.float64(y), nbrs)) - psi_star + 2.0 * p.c_minus * (y - x_star) ** 2
        if log_acc > 1e-9:
            raise SamplerError(f"envelope violated (log acceptance {log_acc:.2e} > 0)")
        if math.log(u) < min(0.0, log_acc):
            return float(y)


# ---------------------------------------------------------------------------
# Vectorized checkerboard heat bath
# ---------------------------------------------------------------------------


def _checkerboard_indices(dom: Domain) -> list[tuple[np.ndarray, list[np.ndarray]]]:
    """Per-color flat grid indices of interior sites and their 4 neighbors."""
    gx, gy = dom.side[0] + 1, dom.side[1] + 1
    ix, iy = np.meshgrid(np.arange(1, gx - 1), np.arange(1, gy - 1), indexing="ij")
    ix, iy = ix.ravel(), iy.ravel()
    out = []
    for color in (0, 1):
        sel = ((ix + iy) % 2) == color
        cx, cy = ix[sel], iy[sel]
        site = cx * gy + cy
        nbrs = [(cx + 1) * gy + cy, (cx - 1) * gy + cy, cx * gy + cy + 1, cx * gy + cy - 1]
        out.append((site, nbrs))
    return out


def _half_sweep(
    p: Potential,
    flat: np.ndarray,
    site_idx: np.ndarray,
    nbr_idx: list[np.ndarray],
    gens: Sequence[np.random.Generator],
    diag: ChainDiagnostics,
) -> None:
    """Resample one checkerboard color for all replicas in the batch.

    ``flat`` is the (R, gx*gy) flattened field, modified in place.  Per
    rejection round, replica r draws the normals for its still-active sites
    and then the uniforms, in flat site order.
    """
    n_rep = flat.shape[0]
    k = len(site_idx)
    if k == 0:
        return
    nbrs = [flat[:, idx] for idx in nbr_idx]  # four (R, K) arrays
    total = nbrs[0] + nbrs[1] + nbrs[2] + nbrs[3]

    if p.is_quadratic:
        # Conditional is exactly N(mean(nbrs), 1/4): envelope accepts always.
        mean = 0.25 * total
        z = np.empty((n_rep, k))
        for r in range(n_rep):
            z[r] = gens[r].standard_normal(k)
        flat[:, site_idx] = mean + 0.5 * z
        diag.site_updates += n_rep * k
        diag.proposals += n_rep * k
        diag.accepted += n_rep * k
        return

    x_star = _mode_newton_vec(p, nbrs, total)
    psi_star = _neg_energy(p, x_star, nbrs)
    sigma = 1.0 / math.sqrt(4.0 * p.c_minus)

    out = np.empty((n_rep, k))
    active = np.ones((n_rep, k), dtype=bool)
    diag.site_updates += n_rep * k
    while active.any():
        ar, ac = np.nonzero(active)
        counts = np.bincount(ar, minlength=n_rep)
        z = np.empty(len(ar))
        u = np.empty(len(ar))
        pos = 0
        for r in range(n_rep):
            c = counts[r]
            if c:
                z[pos : pos + c] = gens[r].standard_normal(c)
                u[pos : pos + c] = gens[r].random(c)
                pos += c
        xs = x_star[ar, ac]
        y = xs + sigma * z
        log_acc = 2.0 * p.c_minus * (y - xs) ** 2 - psi_star[ar, ac]
        for n in nbrs:
            log_acc -= p.eval(y - n[ar, ac])
        if log_acc.size and log_acc.max() > 1e-9:
            raise SamplerError(f"envelope violated (log acceptance {log_acc.max():.2e} > 0)")
        acc = np.log(u) < np.minimum(log_acc, 0.0)
        out[ar[acc], ac[acc]] = y[acc]
        active[ar[acc], ac[acc]] = False
        diag.proposals += len(ar)
        diag.accepted += int(acc.sum())
    flat[:, site_idx] = out


def _raster_sweep(p: Potential, values: np.ndarray, gen: np.random.Generator, diag: ChainDiagnostics) -> None:
    """Sequential raster-order sweep of a single replica (debugging path)."""
    gx, gy = values.shape
    for ix in range(1, gx - 1):
        for iy in range(1, gy - 1):
            nb = (values[ix + 1, iy], values[ix - 1, iy], values[ix, iy + 1], values[ix, iy - 1])
            values[ix, iy] = conditional_site_sample(p, nb, gen)
            diag.site_updates += 1


def _bc_grid(dom: Domain, bc) -> np.ndarray:
    shape = (dom.side[0] + 1, dom.side[1] + 1)
    bc = np.asarray(bc, dtype=float)
    if bc.ndim == 0:
        grid = np.full(shape, float(bc))
    elif bc.shape == shape:
        grid = bc.astype(float).copy()
    else:
        bd = dom.boundary_coords()
        if bc.shape != (len(bd),):
            raise SamplerError(f"boundary condition shape {bc.shape} matches neither grid nor ring")
        grid = np.zeros(shape)
        grid[bd[:, 0] - dom.origin.x, bd[:, 1] - dom.origin.y] = bc
    if not np.all(np.isfinite(grid)):
        raise SamplerError("boundary condition must be finite")
    return grid


def _initial_state(p: Potential, dom: Domain, bc_grid: np.ndarray, cfg: ChainConfig, gen: np.random.Generator) -> np.ndarray:
    values = bc_grid.copy()
    if cfg.init == "zeros":
        values[1:-1, 1:-1] = 0.0
        if np.any(bc_grid != 0.0):
            from .greens import harmonic_extension

            values[1:-1, 1:-1] = harmonic_extension(dom, bc_grid)[1:-1, 1:-1]
        return values
    scale = 1.0 / math.sqrt(0.5 * (p.c_minus + p.c_plus))
    values[1:-1, 1:-1] = scale * _dgff_interior_rect(dom.side[0] - 1, dom.side[1] - 1, gen)
    if np.any(bc_grid != 0.0):
        from .greens import harmonic_extension

        values[1:-1, 1:-1] += harmonic_extension(dom, bc_grid)[1:-1, 1:-1]
    return values


def _dgff_interior_rect(mx: int, my: int, gen: np.random.Generator) -> np.ndarray:
    """Exact zero-boundary Gaussian field on an mx x my interior grid."""
    jx = np.arange(1, mx + 1)
    jy = np.arange(1, my + 1)
    mux = 2.0 - 2.0 * np.cos(jx * np.pi / (mx + 1))
    muy = 2.0 - 2.0 * np.cos(jy * np.pi / (my + 1))
    lam = mux[:, None] + muy[None, :]
    amp = gen.standard_normal((mx, my)) / np.sqrt(lam)
    return scipy.fft.dstn(amp, type=1) / (2.0 * math.sqrt((mx + 1) * (my + 1)))


def _dgff_interior(n: int, gen: np.random.Generator) -> np.ndarray:
    """Exact zero-boundary Gaussian field on the (2N-1)^2 interior grid."""
    return _dgff_interior_rect(2 * n - 1, 2 * n - 1, gen)


def dgff_exact(n: int, rng: np.random.Generator) -> Field:
    """Exact zero-boundary Gaussian field on the box of half-side N."""
    if n < 1:
        raise LatticeError(f"box half-side must be >= 1, got {n}")
    dom = make_box(n)
    values = np.zeros((2 * n + 1, 2 * n + 1))
    values[1:-1, 1:-1] = _dgff_interior(n, rng)
    return Field(dom, values)


def dgff_batch(n: int, gens: Sequence[np.random.Generator]) -> np.ndarray:
    """Stack of exact Gaussian fields, one per generator: (R, 2N+1, 2N+1)."""
    out = np.zeros((len(gens), 2 * n + 1, 2 * n + 1))
    for r, g in enumerate(gens):
        out[r, 1:-1, 1:-1] = _dgff_interior(n, g)
    return out


def iter_chain_batches(
    p: Potential,
    dom: Domain,
    bc,
    cfg: ChainConfig,
    n_samples: int,
    gens: Sequence[np.random.Generator],
    chunk_elems: int = 6_000_000,
    diag: ChainDiagnostics | None = None,
) -> Iterator[tuple[range, np.ndarray]]:
    """Run independent heat-bath chains and yield thinned snapshot batches.

    Yields ``(replica_range, values)`` with values of shape
    (chunk, n_samples, gx, gy).  Replicas are chunked to bound memory; the
    per-replica streams make the output independent of the chunking.
    """
    if n_samples < 1:
        raise SamplerError("n_samples must be >= 1")
    bc_grid = _bc_grid(dom, bc)
    gx, gy = bc_grid.shape
    burn = cfg.resolved_burn_in(dom)
    total_sweeps = burn + (n_samples - 1) * cfg.thinning + 1
    colors = _checkerboard_indices(dom)
    if diag is None:
        diag = ChainDiagnostics()

    chunk = max(1, int(chunk_elems // (gx * gy)))
    for start in range(0, len(gens), chunk):
        batch_gens = gens[start : start + chunk]
        n_rep = len(batch_gens)
        flat = np.empty((n_rep, gx * gy))
        for r, g in enumerate(batch_gens):
            flat[r] = _initial_state(p, dom, bc_grid, cfg, g).ravel()
        snaps = np.empty((n_rep, n_samples, gx, gy))
        s_next, s_count = burn, 0
        for sweep in range(total_sweeps):
            if cfg.sweep_order == "checkerboard":
                for site_idx, nbr_idx in colors:
                    _half_sweep(p, flat, site_idx, nbr_idx, batch_gens, diag)
            else:
                for r, g in enumerate(batch_gens):
                    grid = flat[r].reshape(gx, gy)
                    _raster_sweep(p, grid, g, diag)
                    flat[r] = grid.ravel()
            if sweep == s_next and s_count < n_samples:
                snaps[:, s_count] = flat.reshape(n_rep, gx, gy)
                s_count += 1
                s_next += cfg.thinning
        yield range(start, start + n_rep), snaps


def mcmc_sample(
    p: Potential,
    dom: Domain,
    bc,
    cfg: ChainConfig,
    n_samples: int,
) -> list[Field]:
    """Heat-bath samples of the gradient Gibbs measure on ``dom``.

    Runs a single chain seeded from ``cfg.seed`` and returns the thinned
    post-burn-in fields, fully reproducible from the seed.
    """
    from .seeding import replica_generator

    gen = replica_generator(cfg.seed, 0, 0)
    out: list[Field] = []
    for _, snaps in iter_chain_batches(p, dom, bc, cfg, n_samples, [gen]):
        for s in range(snaps.shape[1]):
            out.append(Field(dom, snaps[0, s].copy()))
    return out


def max_over(f: Field, region: np.ndarray) -> tuple[float, Coord]:
    """Exact maximum of the field over a vertex set, with the first-scan-order
    argmax (lexicographic order of the region coordinates)."""
    region = np.asarray(region)
    if region.size == 0:
        raise LatticeError("empty region")
    order = np.lexsort((region[:, 1], region[:, 0]))
    region = region[order]
    ix, iy = f.domain.index_of(region)
    vals = f.values[ix, iy]
    k = int(np.argmax(vals))
    return float(vals[k]), Coord(int(region[k, 0]), int(region[k, 1]))


# ---------------------------------------------------------------------------
# Energy bookkeeping
# ---------------------------------------------------------------------------


@dataclass
class GibbsEnergy:
    """Total bond energy sum_edges V(gradient), maintained incrementally."""

    total: float

    @classmethod
    def compute(cls, f: Field, p: Potential) -> "GibbsEnergy":
        dx = np.diff(f.values, axis=0)
        dy = np.diff(f.values, axis=1)
        return cls(total=float(p.eval(dx).sum() + p.eval(dy).sum()))

    def updated(self, f: Field, p: Potential, site, new_value: float) -> "GibbsEnergy":
        """Energy after changing one interior site, via the local bond delta."""
        ix, iy = f.domain.index_of(np.asarray(site).reshape(1, 2))
        ix, iy = int(ix[0]), int(iy[0])
        old = f.values[ix, iy]
        nbrs = [f.values[ix + 1, iy], f.values[ix - 1, iy], f.values[ix, iy + 1], f.values[ix, iy - 1]]
        delta = sum(float(p.eval(np.float64(new_value - n)) - p.eval(np.float64(old - n))) for n in nbrs)
        return GibbsEnergy(total=self.total + delta)

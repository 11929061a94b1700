"""Discrete potential theory on boxes: Green's functions, harmonic measure,
the potential kernel of the plane, and harmonic-decomposition variance
reports.

Conventions.  The zero-boundary Gaussian field on a box has covariance
equal to the inverse Dirichlet graph Laplacian (diagonal 4, off-diagonal -1
on interior-interior edges); we call this the *covariance* convention.  The
random-walk Green's function (expected visits before exit) is exactly 4x
that: the *walk* convention.  The factor is carried explicitly because it
is the most likely silent-bug site; every report states its convention.

The potential kernel a(x) on Z^2 satisfies

    (1/4) sum_{y ~ x} a(y) - a(x) = [x == 0],      a(0) = 0,
    a(x) = (2/pi) log|x| + D0 + O(|x|^-2),

and admits an exact representation a(x) = p + q / pi with rational p, q:
the diagonal values are a(k,k) = (4/pi) (1 + 1/3 + ... + 1/(2k-1)), and the
harmonicity relation propagates (p, q) exactly.  The table is therefore
built in exact integer arithmetic (q scaled by the lcm of the odd numbers)
and only rounded to float at the end; the coefficients grow exponentially
with the radius, which is precisely why a floating-point recursion would be
unstable and why exact arithmetic is used instead.  An independent 1-D
quadrature of the Fourier representation,

    a(m,n) = (2/pi) Int_0^pi (1 - rho^|m| cos(n t)) / sqrt(c^2-1) dt,
    c = 2 - cos t,  rho = c - sqrt(c^2 - 1),

serves as a cross-check oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.integrate
import scipy.sparse
import scipy.sparse.linalg

from .lattice import Coord, Domain, boundary_pieces, make_box, translate_offsets

__all__ = [
    "PotentialKernel",
    "GreenTable",
    "HarmonicSplit",
    "GreensError",
    "potential_kernel",
    "potential_kernel_quadrature",
    "green_direct",
    "box_green_diag",
    "box_green_entry",
    "harmonic_measure",
    "green_via_representation",
    "green_representation_matrix",
    "harmonic_extension",
    "harmonic_split",
    "harmonic_split_variances",
    "pair_difference_variance",
    "harmonic_measure_deviation",
    "shrink_margin",
    "int_threshold_geq",
]

MAX_FACTOR_INTERIOR = 100_000  # sparse-factorization feasibility contract
MAX_DENSE_INTERIOR = 4_096  # full-matrix materialization guard


class GreensError(ValueError):
    """Invalid potential-theory computation."""


def int_threshold_geq(t: float) -> int:
    """Smallest integer d with d >= t, robust to float fuzz at integers."""
    return int(math.ceil(t - 1e-9))


def shrink_margin(n: int, gamma: float) -> int:
    """Integer margin realizing dist >= N^gamma on a box of half-side N."""
    return int_threshold_geq(n**gamma)


# ---------------------------------------------------------------------------
# Potential kernel
# ---------------------------------------------------------------------------


@dataclass
class PotentialKernel:
    """Exact table of the plane potential kernel on [-R, R]^2.

    ``values[dx + R, dy + R] = a(dx, dy)``.  ``d0_fit`` is the constant from
    a least-squares fit of a(x) - (2/pi) log|x| over the Euclidean annulus
    0.8 R <= |x| <= R.
    """

    radius: int
    values: np.ndarray
    d0_fit: float

    def at(self, dx: int, dy: int) -> float:
        r = self.radius
        if abs(dx) > r or abs(dy) > r:
            raise GreensError(f"offset ({dx},{dy}) outside kernel table of radius {r}")
        return float(self.values[dx + r, dy + r])

    def harmonicity_residual(self) -> float:
        """max over 0 < |x|_inf <= R-1 of |(1/4) sum_nbr a - a|."""
        v = self.values
        lap = 0.25 * (v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2]) - v[1:-1, 1:-1]
        lap[self.radius - 1, self.radius - 1] = 0.0  # origin carries the unit mass
        return float(np.abs(lap).max())


def _exact_kernel_octant(radius: int) -> tuple[list[list[int]], list[list[int]], int]:
    """Exact (P, Q) integer tables over the octant 0 <= y <= x <= radius.

    a(x, y) = P[x][y] + Q[x][y] / (L * pi)  with L = lcm of odd numbers
    <= 2*radius - 1 (so the diagonal seeds clear denominators).
    """
    L = 1
    for odd in range(3, 2 * radius, 2):
        L = L * odd // math.gcd(L, odd)

    P = [[0] * (x + 1) for x in range(radius + 1)]
    Q = [[0] * (x + 1) for x in range(radius + 1)]

    # Diagonal seeds: a(k,k) = (4/pi) * sum_{j<=k} 1/(2j-1).
    acc = 0
    for k in range(1, radius + 1):
        acc += L // (2 * k - 1)
        Q[k][k] = 4 * acc
    if radius >= 1:
        P[1][0] = 1  # harmonicity at the origin forces a(1,0) = 1

    for x in range(1, radius):
        # Next-to-diagonal from harmonicity at (x, x).
        P[x + 1][x] = 2 * P[x][x] - P[x][x - 1]
        Q[x + 1][x] = 2 * Q[x][x] - Q[x][x - 1]
        # Column fill from harmonicity at (x, y), 0 <= y < x.
        P[x + 1][0] = 4 * P[x][0] - P[x - 1][0] - 2 * P[x][1]
        Q[x + 1][0] = 4 * Q[x][0] - Q[x - 1][0] - 2 * Q[x][1]
        for y in range(1, x):
            P[x + 1][y] = 4 * P[x][y] - P[x - 1][y] - P[x][y + 1] - P[x][y - 1]
            Q[x + 1][y] = 4 * Q[x][y] - Q[x - 1][y] - Q[x][y + 1] - Q[x][y - 1]
    return P, Q, L


def potential_kernel(radius: int) -> PotentialKernel:
    """Exact potential-kernel table of the given L-infinity radius (>= 2)."""
    if radius < 2:
        raise GreensError(f"kernel radius must be >= 2, got {radius}")
    import mpmath

    P, Q, L = _exact_kernel_octant(radius)

    # Digits needed: the integer coefficients cancel against q/pi to an O(1)
    # value, so precision must cover their magnitude.
    max_digits = 0
    for x in range(radius + 1):
        for y in range(x + 1):
            d = max(P[x][y].bit_length(), Q[x][y].bit_length())
            if d > max_digits:
                max_digits = d
    dps = int(max_digits * 0.30103) + 25

    octant = np.zeros((radius + 1, radius + 1))
    with mpmath.workdps(dps):
        Lpi = mpmath.mpf(L) * mpmath.pi
        for x in range(radius + 1):
            for y in range(x + 1):
                octant[x, y] = float(P[x][y] + mpmath.mpf(Q[x][y]) / Lpi)
    i, j = np.triu_indices(radius + 1)  # octant stored with x >= y
    octant[i, j] = octant[j, i]

    size = 2 * radius + 1
    values = np.empty((size, size))
    dx = np.abs(np.arange(-radius, radius + 1))
    values[:, :] = octant[dx[:, None], dx[None, :]]

    # Constant of the log asymptotics, fitted on the outer Euclidean annulus.
    xs, ys = np.meshgrid(np.arange(-radius, radius + 1), np.arange(-radius, radius + 1), indexing="ij")
    r = np.hypot(xs, ys)
    ann = (r >= 0.8 * radius) & (r <= radius)
    d0 = float(np.mean(values[ann] - (2.0 / math.pi) * np.log(r[ann])))

    return PotentialKernel(radius=radius, values=values, d0_fit=d0)


def potential_kernel_quadrature(dx: int, dy: int) -> float:
    """Independent quadrature oracle for a single kernel value."""
    m, n = max(abs(dx), abs(dy)), min(abs(dx), abs(dy))
    if m == 0:
        return 0.0

    def integrand(t):
        s = 2.0 * math.sin(0.5 * t) ** 2  # c - 1, cancellation-free
        c = 1.0 + s
        root = math.sqrt(s * (s + 2.0))
        if root == 0.0:
            return float(m)  # removable limit at t = 0
        rho = c - root
        return (1.0 - rho**m * math.cos(n * t)) / root

    val, _ = scipy.integrate.quad(integrand, 0.0, math.pi, limit=400, epsabs=1e-13, epsrel=1e-12)
    return 2.0 / math.pi * val


# ---------------------------------------------------------------------------
# Dirichlet Laplacian and Green table
# ---------------------------------------------------------------------------


def _interior_shape(dom: Domain) -> tuple[int, int]:
    return dom.side[0] - 1, dom.side[1] - 1


@lru_cache(maxsize=16)
def _dirichlet_laplacian(shape: tuple[int, int]) -> scipy.sparse.csc_matrix:
    """Five-point Dirichlet Laplacian on an mx x my interior grid (row-major)."""
    mx, my = shape

    def t2(m):
        return scipy.sparse.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])

    lap = scipy.sparse.kron(t2(mx), scipy.sparse.identity(my)) + scipy.sparse.kron(
        scipy.sparse.identity(mx), t2(my)
    )
    return lap.tocsc()


@lru_cache(maxsize=16)
def _laplacian_factor(shape: tuple[int, int]):
    mx, my = shape
    if mx * my > MAX_FACTOR_INTERIOR:
        raise GreensError(
            f"interior size {mx * my} exceeds the factorization contract "
            f"({MAX_FACTOR_INTERIOR}); use the spectral box routines instead"
        )
    return scipy.sparse.linalg.splu(_dirichlet_laplacian(shape))


class GreenTable:
    """Green's function of a box domain, backed by a sparse factorization.

    Stored in the covariance convention (inverse Dirichlet Laplacian);
    ``convention='walk'`` views scale by 4.  Entries with either argument on
    the boundary are 0 by definition.
    """

    def __init__(self, domain: Domain, convention: str = "covariance"):
        if convention not in ("covariance", "walk"):
            raise GreensError(f"unknown convention {convention!r}")
        self.domain = domain
        self.convention = convention
        self._shape = _interior_shape(domain)
        if self._shape[0] * self._shape[1] < 1:
            raise GreensError("empty interior")
        self._lu = _laplacian_factor(self._shape)
        self._columns: dict[int, np.ndarray] = {}

    @property
    def scale(self) -> float:
        return 4.0 if self.convention == "walk" else 1.0

    def to(self, convention: str) -> "GreenTable":
        out = GreenTable.__new__(GreenTable)
        out.__dict__.update(self.__dict__)
        if convention not in ("covariance", "walk"):
            raise GreensError(f"unknown convention {convention!r}")
        out.convention = convention
        return out

    def _flat_index(self, v) -> int | None:
        """Row-major interior index of v, or None if v is on the boundary."""
        if not self.domain.contains(v):
            raise GreensError(f"vertex {tuple(v)} outside domain")
        ix = v[0] - self.domain.origin.x - 1
        iy = v[1] - self.domain.origin.y - 1
        mx, my = self._shape
        if not (0 <= ix < mx and 0 <= iy < my):
            return None
        return ix * my + iy

    def column(self, u) -> np.ndarray:
        """G(u, .) over the interior (flat row-major), in this convention."""
        k = self._flat_index(u)
        n = self._shape[0] * self._shape[1]
        if k is None:
            return np.zeros(n)
        if k not in self._columns:
            e = np.zeros(n)
            e[k] = 1.0
            self._columns[k] = self._lu.solve(e)
        return self.scale * self._columns[k]

    def entry(self, u, v) -> float:
        j = self._flat_index(v)
        if j is None:
            return 0.0
        return float(self.column(u)[j])

    def diag(self) -> np.ndarray:
        return np.diagonal(self.matrix()).copy()

    def matrix(self) -> np.ndarray:
        """Full interior matrix; guarded to modest sizes."""
        n = self._shape[0] * self._shape[1]
        if n > MAX_DENSE_INTERIOR:
            raise GreensError(f"refusing to materialize a {n}x{n} Green matrix")
        return self.scale * self._lu.solve(np.eye(n))

    def interior_coords(self) -> np.ndarray:
        """Interior coordinates in the flat row-major order used by column()."""
        mx, my = self._shape
        xs = np.arange(self.domain.origin.x + 1, self.domain.origin.x + 1 + mx)
        ys = np.arange(self.domain.origin.y + 1, self.domain.origin.y + 1 + my)
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def quadratic_form(self, coords: np.ndarray, weights: np.ndarray) -> float:
        """w^T G w for a functional supported on the given vertices.

        Boundary vertices carry zero field and are ignored.
        """
        n = self._shape[0] * self._shape[1]
        rhs = np.zeros(n)
        for (x, y), w in zip(np.asarray(coords), np.asarray(weights, dtype=float)):
            k = self._flat_index((int(x), int(y)))
            if k is not None:
                rhs[k] += w
        return float(self.scale * rhs @ self._lu.solve(rhs))


def green_direct(dom: Domain) -> GreenTable:
    """Green table of a box via sparse factorization (covariance convention)."""
    return GreenTable(dom, convention="covariance")


# ---------------------------------------------------------------------------
# Spectral (sine-basis) entries for large boxes
# ---------------------------------------------------------------------------


@lru_cache(maxsize=8)
def _box_spectral(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Sine matrix S[j, p] = sin((j+1)(p+1) pi / (M+1)) and 1/(mu_j + mu_k)."""
    jj = np.arange(1, m + 1)
    mu = 2.0 - 2.0 * np.cos(jj * np.pi / (m + 1))
    s = np.sin(np.outer(jj, jj) * (np.pi / (m + 1)))
    inv = 1.0 / (mu[:, None] + mu[None, :])
    return s, inv


def _local_indices(dom: Domain, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Interior grid indices plus a mask of boundary vertices (which carry
    G = 0 by the Dirichlet convention); strictly-outside vertices raise."""
    coords = np.atleast_2d(np.asarray(coords))
    ax = coords[:, 0] - dom.origin.x
    ay = coords[:, 1] - dom.origin.y
    mx, my = _interior_shape(dom)
    if np.any(ax < 0) or np.any(ax > mx + 1) or np.any(ay < 0) or np.any(ay > my + 1):
        raise GreensError("vertex outside the box")
    on_ring = (ax == 0) | (ax == mx + 1) | (ay == 0) | (ay == my + 1)
    return ax, ay, on_ring


def box_green_diag(dom: Domain, coords: np.ndarray) -> np.ndarray:
    """Exact G(v, v) (covariance convention) for vertices of a square box,
    by summing the sine eigenbasis; O(M^2) per vertex.  Boundary vertices
    give 0."""
    mx, my = _interior_shape(dom)
    if mx != my:
        raise GreensError("spectral routine requires a square box")
    m = mx
    s, inv = _box_spectral(m)
    ax, ay, on_ring = _local_indices(dom, coords)
    ax = np.where(on_ring, 1, ax)
    ay = np.where(on_ring, 1, ay)
    rx = s[:, ax - 1] ** 2  # (m, K)
    ry = s[:, ay - 1] ** 2
    out = np.einsum("jk,jl,lk->k", rx, inv, ry, optimize=True)
    return np.where(on_ring, 0.0, (2.0 / (m + 1)) ** 2 * out)


def box_green_entry(dom: Domain, u, v) -> float:
    """Exact G(u, v) (covariance convention) on a square box; 0 when either
    vertex lies on the boundary ring."""
    mx, my = _interior_shape(dom)
    if mx != my:
        raise GreensError("spectral routine requires a square box")
    m = mx
    s, inv = _box_spectral(m)
    (aux,), (auy,), (ur,) = _local_indices(dom, [u])
    (avx,), (avy,), (vr,) = _local_indices(dom, [v])
    if ur or vr:
        return 0.0
    rx = s[:, aux - 1] * s[:, avx - 1]
    ry = s[:, auy - 1] * s[:, avy - 1]
    return (2.0 / (m + 1)) ** 2 * float(rx @ inv @ ry)


# ---------------------------------------------------------------------------
# Harmonic measure / extension / representation identity
# ---------------------------------------------------------------------------


def harmonic_measure(dom: Domain, u) -> tuple[np.ndarray, np.ndarray]:
    """Exit distribution of simple random walk from u on the boundary ring.

    Returns (boundary_coords, probabilities) with boundary vertices in
    lexicographic order.  For u on the boundary: a point mass at u.
    """
    bd = dom.boundary_coords()
    if dom.is_boundary(u):
        probs = np.zeros(len(bd))
        probs[(bd[:, 0] == u[0]) & (bd[:, 1] == u[1])] = 1.0
        return bd, probs

    table = green_direct(dom)
    col = table.column(u)  # covariance convention: H(u,b) = sum_{w ~ b} G_cov(u,w)
    mx, my = _interior_shape(dom)
    grid = np.zeros((mx + 2, my + 2))
    grid[1:-1, 1:-1] = col.reshape(mx, my)
    nbr_sum = np.zeros_like(grid)
    nbr_sum[:-1, :] += grid[1:, :]
    nbr_sum[1:, :] += grid[:-1, :]
    nbr_sum[:, :-1] += grid[:, 1:]
    nbr_sum[:, 1:] += grid[:, :-1]
    ix = bd[:, 0] - dom.origin.x
    iy = bd[:, 1] - dom.origin.y
    probs = nbr_sum[ix, iy]
    total = probs.sum()
    if abs(total - 1.0) > 1e-10:
        raise GreensError(f"harmonic measure does not sum to 1 (off by {total - 1.0:.2e})")
    return bd, probs


def green_via_representation(dom: Domain, u, v, kernel: PotentialKernel) -> float:
    """Walk-convention Green value assembled from harmonic measure and the
    potential kernel:  G(u,v) = sum_y H(u,y) a(y-v) - a(u-v)."""
    bd, probs = harmonic_measure(dom, u)
    dxy = bd - np.asarray(v)
    r = kernel.radius
    if np.abs(dxy).max() > r or max(abs(u[0] - v[0]), abs(u[1] - v[1])) > r:
        raise GreensError("kernel table too small for this domain")
    vals = kernel.values[dxy[:, 0] + r, dxy[:, 1] + r]
    return float(probs @ vals - kernel.at(u[0] - v[0], u[1] - v[1]))


def green_representation_matrix(dom: Domain, kernel: PotentialKernel) -> np.ndarray:
    """All-pairs walk-convention Green matrix from the representation
    identity (rows/cols in GreenTable interior order)."""
    table = green_direct(dom)
    g = table.matrix()  # covariance
    interior = table.interior_coords()
    bd = dom.boundary_coords()

    # H[u, b] = sum_{w ~ b, w interior} G_cov(u, w)
    n_int, n_bd = len(interior), len(bd)
    pos = {(int(x), int(y)): k for k, (x, y) in enumerate(interior)}
    rows, cols = [], []
    for b_idx, (bx, by) in enumerate(bd):
        for wx, wy in ((bx + 1, by), (bx - 1, by), (bx, by + 1), (bx, by - 1)):
            k = pos.get((wx, wy))
            if k is not None:
                rows.append(k)
                cols.append(b_idx)
    adj = scipy.sparse.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n_int, n_bd)
    )
    h = g @ adj.toarray()

    r = kernel.radius
    d_bv_x = bd[:, 0][:, None] - interior[:, 0][None, :]
    d_bv_y = bd[:, 1][:, None] - interior[:, 1][None, :]
    d_uv_x = interior[:, 0][:, None] - interior[:, 0][None, :]
    d_uv_y = interior[:, 1][:, None] - interior[:, 1][None, :]
    if max(np.abs(d_bv_x).max(), np.abs(d_bv_y).max()) > r:
        raise GreensError("kernel table too small for this domain")
    a_bv = kernel.values[d_bv_x + r, d_bv_y + r]
    a_uv = kernel.values[d_uv_x + r, d_uv_y + r]
    return h @ a_bv - a_uv


def harmonic_extension(dom: Domain, boundary_data) -> np.ndarray:
    """Solve the discrete Dirichlet problem on a box.

    ``boundary_data`` is a scalar, an array aligned with
    ``dom.boundary_coords()``, or a full grid whose ring is read.  Returns
    the full grid (ring = data, interior = harmonic extension).
    """
    bd = dom.boundary_coords()
    grid_shape = (dom.side[0] + 1, dom.side[1] + 1)
    data_grid = np.zeros(grid_shape)
    boundary_data = np.asarray(boundary_data, dtype=float)
    if boundary_data.ndim == 0:
        ring = np.full(len(bd), float(boundary_data))
    elif boundary_data.shape == grid_shape:
        ring = boundary_data[bd[:, 0] - dom.origin.x, bd[:, 1] - dom.origin.y]
    elif boundary_data.shape == (len(bd),):
        ring = boundary_data
    else:
        raise GreensError(
            f"boundary data shape {boundary_data.shape} matches neither the ring "
            f"({len(bd)},) nor the grid {grid_shape}"
        )
    if not np.all(np.isfinite(ring)):
        raise GreensError("boundary data must be finite")
    data_grid[bd[:, 0] - dom.origin.x, bd[:, 1] - dom.origin.y] = ring

    mx, my = _interior_shape(dom)
    # rhs_v = sum of boundary-neighbor values for interior v
    rhs = np.zeros((mx, my))
    rhs += np.where(np.arange(1, mx + 1)[:, None] == 1, data_grid[0:1, 1:-1], 0.0)
    rhs += np.where(np.arange(1, mx + 1)[:, None] == mx, data_grid[-1:, 1:-1], 0.0)
    rhs += np.where(np.arange(1, my + 1)[None, :] == 1, data_grid[1:-1, 0:1], 0.0)
    rhs += np.where(np.arange(1, my + 1)[None, :] == my, data_grid[1:-1, -1:], 0.0)

    lu = _laplacian_factor((mx, my))
    sol = lu.solve(rhs.ravel()).reshape(mx, my)
    out = data_grid.copy()
    out[1:-1, 1:-1] = sol
    return out


@dataclass
class HarmonicSplit:
    """Difference of two harmonic extensions on a shrunken box.

    ``h_hat`` extends the outer field's ring values, ``h_tilde`` the inner
    field's; ``h = h_hat - h_tilde`` is the harmonic comparison field.
    """

    domain: Domain
    h_hat: np.ndarray
    h_tilde: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return self.h_hat - self.h_tilde

    def max_harmonicity_residual(self) -> float:
        """Worst 4-point mean-value defect of both components, interior only."""
        worst = 0.0
        for g in (self.h_hat, self.h_tilde):
            lap = 0.25 * (g[2:, 1:-1] + g[:-2, 1:-1] + g[1:-1, 2:] + g[1:-1, :-2]) - g[1:-1, 1:-1]
            worst = max(worst, float(np.abs(lap).max()))
        return worst


def harmonic_split(dom: Domain, outer_ring, inner_ring) -> HarmonicSplit:
    return HarmonicSplit(
        domain=dom,
        h_hat=harmonic_extension(dom, outer_ring),
        h_tilde=harmonic_extension(dom, inner_ring),
    )


# ---------------------------------------------------------------------------
# Exact Gaussian variance reports for the two-scale geometry
# ---------------------------------------------------------------------------


def _two_scale_domains(n: int, gamma: float) -> tuple[Domain, Domain, Domain]:
    """(big box of half-side 4N, first translated copy, its shrinkage)."""
    big = make_box(4 * n)
    (ox, oy), _ = translate_offsets(n)
    copy1 = Domain(Coord(ox - n, oy - n), (2 * n, 2 * n))
    s = shrink_margin(n, gamma)
    if n - s < 1:
        raise GreensError(f"shrink margin {s} leaves no interior at half-side {n}")
    shrunk = Domain(Coord(ox - (n - s), oy - (n - s)), (2 * (n - s), 2 * (n - s)))
    return big, copy1, shrunk


def harmonic_split_variances(n: int, eps: float, delta: float, gamma: float) -> dict:
    """Exact Gaussian variances of the two harmonic-extension components on
    the boundary pieces of the first translated trimmed funnel.

    For each vertex v of the top lip and side pieces,

        var_hat(v)   = G_{4N}(v,v) - G_shrunk(v,v)
        var_tilde(v) = G_copy(v,v) - G_shrunk(v,v)

    (covariance convention), the orthogonal-decomposition identities for the
    conditional mean onto the shrunken box's boundary sigma-field.
    """
    if not (0.0 < gamma < delta < 1.0):
        raise GreensError(f"need 1 > delta > gamma > 0, got delta={delta}, gamma={gamma}")
    top_lip, sides = boundary_pieces(n, eps, delta)
    big, copy1, shrunk = _two_scale_domains(n, gamma)

    rows = []
    for piece_name, piece in (("top", top_lip), ("side", sides)):
        if len(piece) == 0:
            continue
        g_big = box_green_diag(big, piece)
        g_copy = box_green_diag(copy1, piece)
        g_shr = box_green_diag(shrunk, piece)
        var_hat = g_big - g_shr
        var_tilde = g_copy - g_shr
        for (x, y), vh, vt in zip(piece, var_hat, var_tilde):
            rows.append(dict(x=int(x), y=int(y), piece=piece_name, var_hat=float(vh), var_tilde=float(vt)))

    by_piece = {}
    for piece_name in ("top", "side"):
        sub = [r for r in rows if r["piece"] == piece_name]
        if sub:
            by_piece[piece_name] = dict(
                count=len(sub),
                max_var_hat=max(r["var_hat"] for r in sub),
                max_var_tilde=max(r["var_tilde"] for r in sub),
                min_var_hat=min(r["var_hat"] for r in sub),
                min_var_tilde=min(r["var_tilde"] for r in sub),
            )
    return dict(
        n=n,
        eps=eps,
        delta=delta,
        gamma=gamma,
        convention="covariance",
        rows=rows,
        summary=by_piece,
    )


def pair_difference_variance(n: int, eps: float, gamma: float, u, v) -> float:
    """Exact Gaussian variance of the increment of the outer harmonic
    extension between two side-piece vertices:

        Var[h_hat_u - h_hat_v]
          = Var[phi^{4N}_u - phi^{4N}_v] - Var[phi^{shrunk}_u - phi^{shrunk}_v]

    (covariance convention).  Vertices must lie in the side piece.
    """
    big, _copy1, shrunk = _two_scale_domains(n, gamma)
    if tuple(u) == tuple(v):
        return 0.0

    def var_diff(dom):
        guu = box_green_entry(dom, u, u)
        gvv = box_green_entry(dom, v, v)
        guv = box_green_entry(dom, u, v)
        return guu + gvv - 2.0 * guv

    return var_diff(big) - var_diff(shrunk)


def pair_increment_scan(
    n: int,
    eps: float,
    delta: float,
    gamma: float,
    fracs: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0),
) -> dict:
    """Increment variances along the side piece and the fitted chaining
    constant.

    Pairs are chosen deterministically: the side piece is ordered by angle
    around the copy's center, one end is the anchor, and partners sit at L1
    separations as close as possible to the given multiples of eps*N.  The
    constant is the least-squares fit through the origin of the variance
    against |u - v| / (eps N); the separations span up to the piece's full
    extent on purpose, since the large-separation plateau (controlled by the
    N-stable single-vertex variances) is what pins the constant.
    """
    _lip, side = boundary_pieces(n, eps, delta)
    (ox, oy), _ = translate_offsets(n)
    loc = side - np.array([ox, oy])
    order = np.argsort(np.arctan2(loc[:, 1], loc[:, 0]), kind="stable")
    arc = side[order]
    e_n = eps * n
    u = tuple(int(c) for c in arc[0])
    d1 = np.abs(arc[:, 0] - u[0]) + np.abs(arc[:, 1] - u[1])
    rows = []
    num = den = 0.0
    for f in fracs:
        idx = int(np.argmin(np.abs(d1 - f * e_n)))
        v = tuple(int(c) for c in arc[idx])
        d = int(d1[idx])
        if d == 0:
            continue
        var = pair_difference_variance(n, eps, gamma, u, v)
        x = d / e_n
        rows.append(dict(ux=u[0], uy=u[1], vx=v[0], vy=v[1], separation=d, x=x, variance=var, ratio=var / x))
        num += var * x
        den += x * x
    if den == 0.0:
        raise GreensError("no usable pairs; side piece too small")
    return dict(n=n, eps=eps, delta=delta, gamma=gamma, k_fit=num / den, rows=rows)


def harmonic_measure_deviation(n: int, u, v) -> float:
    """max over boundary z of |H(u,z) - H(v,z)| on the box of half-side 4N.

    Both vertices must be in the bulk (distance >= N from the boundary).
    """
    dom = make_box(4 * n)
    from .lattice import dist_to_boundary

    for w in (u, v):
        if dist_to_boundary(dom, w) < n:
            raise GreensError(f"vertex {tuple(w)} not in the bulk (dist < {n})")
    _, pu = harmonic_measure(dom, u)
    _, pv = harmonic_measure(dom, v)
    return float(np.abs(pu - pv).max())

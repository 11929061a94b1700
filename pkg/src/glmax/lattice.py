"""Integer-lattice geometry: boxes, boundaries, and derived regions.

Everything lives on Z^2.  A domain is an axis-aligned box of vertices; its
boundary is the ring of vertices connected by an edge to the complement,
and its interior is the rest.  Distances are graph (L1) distances on Z^2,
which for a box reduce to closed forms:

    dist(v, boundary) = margin(v) = min distance to any of the four sides,
    dist(v, top edge) = vertical distance to the top row.

Derived regions (all on a centered box of half-side N, then optionally
translated):

    bulk(eps)               margin >= eps*N
    funnel(eps)             bulk union the cone {y >= |x|} of vertices whose
                            nearest boundary side is the top edge
    funnel_trimmed(eps,d)   funnel minus the layer within N^(1-d) of the top
    strip(d)                margin < N^d  (thin boundary layer)
    shrink(g)               margin >= N^g
    translate(offset)       the whole box, shifted

Real-valued thresholds (eps*N, N^d, ...) are compared against integer
distances without rounding: "dist >= t" means the integer distance is at
least the real number t.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "Coord",
    "Domain",
    "RegionSpec",
    "LatticeError",
    "EmptyRegionError",
    "make_box",
    "dist_to_boundary",
    "dist_to_top",
    "region",
    "region_mask",
    "region_boundary",
    "translated_copies",
    "boundary_pieces",
    "translate_offsets",
]

REGION_KINDS = ("full", "bulk", "funnel", "funnel_trimmed", "strip", "shrink", "translate")


class LatticeError(ValueError):
    """Invalid lattice geometry or parameters."""


class EmptyRegionError(LatticeError):
    """A region specification produced no vertices."""


class Coord(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class Domain:
    """Axis-aligned box of lattice vertices.

    ``origin`` is the lower-left vertex and ``side`` the two nonnegative
    extents, so the vertex set is ``[x0, x0+sx] x [y0, y0+sy]`` with
    ``(side[0]+1)*(side[1]+1)`` vertices.  The boundary is the perimeter
    ring; every interior vertex has its 4 lattice neighbors inside the box.
    """

    origin: Coord
    side: tuple[int, int]

    def __post_init__(self):
        if self.side[0] < 2 or self.side[1] < 2:
            raise LatticeError(f"box side extents must be >= 2, got {self.side} (no interior)")
        object.__setattr__(self, "origin", Coord(*self.origin))

    @property
    def x_max(self) -> int:
        return self.origin.x + self.side[0]

    @property
    def y_max(self) -> int:
        return self.origin.y + self.side[1]

    @property
    def half_side(self) -> int:
        """Half-side N of a square box with even extents (a translated D_N)."""
        if self.side[0] != self.side[1] or self.side[0] % 2:
            raise LatticeError(f"not a square box with even side: {self.side}")
        return self.side[0] // 2

    @property
    def center(self) -> Coord:
        return Coord(self.origin.x + self.side[0] // 2, self.origin.y + self.side[1] // 2)

    @property
    def n_vertices(self) -> int:
        return (self.side[0] + 1) * (self.side[1] + 1)

    @property
    def n_interior(self) -> int:
        return (self.side[0] - 1) * (self.side[1] - 1)

    def contains(self, v) -> bool:
        x, y = v
        return self.origin.x <= x <= self.x_max and self.origin.y <= y <= self.y_max

    def is_boundary(self, v) -> bool:
        x, y = v
        return self.contains(v) and (
            x == self.origin.x or x == self.x_max or y == self.origin.y or y == self.y_max
        )

    # Coordinate grids, useful for vectorized region/field computations.
    def coord_grids(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid (X, Y) of all vertex coordinates, indexed [ix, iy]."""
        xs = np.arange(self.origin.x, self.x_max + 1)
        ys = np.arange(self.origin.y, self.y_max + 1)
        return np.meshgrid(xs, ys, indexing="ij")

    def margin_grid(self) -> np.ndarray:
        """Distance to the boundary ring for every vertex, as a grid."""
        X, Y = self.coord_grids()
        return np.minimum.reduce([X - self.origin.x, self.x_max - X, Y - self.origin.y, self.y_max - Y])

    def boundary_coords(self) -> np.ndarray:
        """Boundary ring as an (B, 2) array, lexicographically sorted."""
        m = self.margin_grid() == 0
        return self._mask_to_coords(m)

    def interior_coords(self) -> np.ndarray:
        m = self.margin_grid() >= 1
        return self._mask_to_coords(m)

    def _mask_to_coords(self, mask: np.ndarray) -> np.ndarray:
        X, Y = self.coord_grids()
        coords = np.column_stack([X[mask], Y[mask]])
        order = np.lexsort((coords[:, 1], coords[:, 0]))
        return coords[order]

    def index_of(self, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Grid indices (ix, iy) of the given (K, 2) coordinate array."""
        coords = np.asarray(coords)
        ix = coords[..., 0] - self.origin.x
        iy = coords[..., 1] - self.origin.y
        if np.any(ix < 0) or np.any(iy < 0) or np.any(ix > self.side[0]) or np.any(iy > self.side[1]):
            raise LatticeError("coordinates outside the domain")
        return ix, iy


def make_box(n: int) -> Domain:
    """The centered box [-N, N]^2, with (2N+1)^2 vertices."""
    if n < 1:
        raise LatticeError(f"box half-side must be >= 1, got {n}")
    return Domain(Coord(-n, -n), (2 * n, 2 * n))


def dist_to_boundary(dom: Domain, v) -> int:
    """Graph (L1) distance from v to the boundary ring of the box."""
    if not dom.contains(v):
        raise LatticeError(f"vertex {tuple(v)} outside domain")
    x, y = v
    return min(x - dom.origin.x, dom.x_max - x, y - dom.origin.y, dom.y_max - y)


def dist_to_top(dom: Domain, v) -> int:
    """Graph distance from v to the top edge [x0, x1] x {y1}."""
    if not dom.contains(v):
        raise LatticeError(f"vertex {tuple(v)} outside domain")
    return dom.y_max - v[1]


@dataclass(frozen=True)
class RegionSpec:
    """Specification of a derived region on a square box.

    kind: one of full | bulk | funnel | funnel_trimmed | strip | shrink | translate
    eps:   bulk margin fraction, in (0, 1)        (bulk, funnel, funnel_trimmed)
    delta: trimming / strip exponent, in (0, 1)   (funnel_trimmed, strip)
    gamma: shrink exponent, in (0, 1)             (shrink)
    offset: integer translation                    (translate)
    """

    kind: str
    eps: float | None = None
    delta: float | None = None
    gamma: float | None = None
    offset: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise LatticeError(f"unknown region kind {self.kind!r}; expected one of {REGION_KINDS}")
        need = {
            "full": (),
            "bulk": ("eps",),
            "funnel": ("eps",),
            "funnel_trimmed": ("eps", "delta"),
            "strip": ("delta",),
            "shrink": ("gamma",),
            "translate": ("offset",),
        }[self.kind]
        for name in need:
            if getattr(self, name) is None:
                raise LatticeError(f"region kind {self.kind!r} requires parameter {name!r}")
        for name in ("eps", "delta", "gamma"):
            val = getattr(self, name)
            if val is not None and not (0.0 < val < 1.0):
                raise LatticeError(f"{name}={val} outside (0, 1)")
        if self.offset is not None:
            object.__setattr__(self, "offset", (int(self.offset[0]), int(self.offset[1])))


def _region_mask_centered(n: int, spec: RegionSpec, dom: Domain) -> np.ndarray:
    """Boolean mask of the region over dom's grid, dom a centered-frame box D_N."""
    X, Y = dom.coord_grids()
    # Work in centered coordinates so the formulas below read like the definitions.
    cx, cy = dom.center
    Xc, Yc = X - cx, Y - cy
    margin = np.minimum.reduce([n - Xc, n + Xc, n - Yc, n + Yc])
    top = n - Yc  # distance to the top edge

    kind = spec.kind
    if kind == "full":
        return np.ones_like(margin, dtype=bool)
    if kind == "bulk":
        return margin >= spec.eps * n
    if kind == "funnel":
        return (margin >= spec.eps * n) | (Yc >= np.abs(Xc))
    if kind == "funnel_trimmed":
        funnel = (margin >= spec.eps * n) | (Yc >= np.abs(Xc))
        return funnel & (top > n ** (1.0 - spec.delta))
    if kind == "strip":
        return margin < n**spec.delta
    if kind == "shrink":
        return margin >= n**spec.gamma
    if kind == "translate":
        return np.ones_like(margin, dtype=bool)
    raise LatticeError(kind)


def region_mask(dom: Domain, spec: RegionSpec) -> np.ndarray:
    """Region as a boolean grid mask aligned with dom.coord_grids()."""
    n = dom.half_side
    mask = _region_mask_centered(n, spec, dom)
    if not mask.any():
        raise EmptyRegionError(f"region {spec} is empty on a box of half-side {n}")
    return mask


def region(dom: Domain, spec: RegionSpec) -> np.ndarray:
    """Region vertex set as an (K, 2) int array, lexicographically sorted.

    For kind='translate' the returned coordinates are shifted by the offset
    (the vertex set of the translated box).
    """
    mask = region_mask(dom, spec)
    coords = dom._mask_to_coords(mask)
    if spec.kind == "translate":
        coords = coords + np.asarray(spec.offset, dtype=coords.dtype)
    return coords


def region_boundary(coords: np.ndarray) -> np.ndarray:
    """Vertices of a region adjacent (graph distance 1) to its complement."""
    pts = {(int(x), int(y)) for x, y in np.asarray(coords)}
    out = [
        (x, y)
        for (x, y) in pts
        if ((x + 1, y) not in pts or (x - 1, y) not in pts or (x, y + 1) not in pts or (x, y - 1) not in pts)
    ]
    arr = np.array(sorted(out), dtype=np.int64).reshape(-1, 2)
    return arr


def translate_offsets(n: int) -> tuple[tuple[int, int], tuple[int, int]]:
    """The two standard translations (+-round(1.1 N), 3N), half-up rounding."""
    dx = int(np.floor(1.1 * n + 0.5))
    return (-dx, 3 * n), (dx, 3 * n)


def translated_copies(n: int, spec: RegionSpec) -> tuple[np.ndarray, np.ndarray]:
    """The two translated copies of a region of D_N, living inside D_{4N}.

    The copies are shifted by (-round(1.1 N), 3N) and (+round(1.1 N), 3N);
    they must be disjoint and contained in the box of half-side 4N.
    """
    base = region(make_box(n), spec)
    (ox1, oy1), (ox2, oy2) = translate_offsets(n)
    c1 = base + np.array([ox1, oy1])
    c2 = base + np.array([ox2, oy2])
    big = 4 * n
    for c, tag in ((c1, 1), (c2, 2)):
        if np.abs(c).max() > big:
            raise LatticeError(f"translated copy {tag} leaves the box of half-side {big}")
    s1 = {(int(x), int(y)) for x, y in c1}
    if any((int(x), int(y)) in s1 for x, y in c2):
        raise LatticeError("translated copies overlap; region too wide for the offsets")
    return c1, c2


def boundary_pieces(n: int, eps: float, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Split the boundary of the first translated trimmed funnel into
    (top_lip, sides).

    The top lip collects the boundary vertices whose strictly nearest box
    side is the top edge (the row where the funnel was trimmed); everything
    else -- the bulk-square sides and bottom at the eps*N margin, the
    diagonal flanks of the funnel, and corner vertices -- goes to the side
    piece.  Both are returned in the translated frame of the first copy.
    """
    spec = RegionSpec("funnel_trimmed", eps=eps, delta=delta)
    base = region(make_box(n), spec)
    bd = region_boundary(base)
    x, y = bd[:, 0], bd[:, 1]
    in_cone_strict = y > np.abs(x)  # strictly nearest side is the top
    top_lip = bd[in_cone_strict]
    sides = bd[~in_cone_strict]
    (ox, oy), _ = translate_offsets(n)
    off = np.array([ox, oy])
    return top_lip + off, sides + off

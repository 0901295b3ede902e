"""Continuum domains built from axis-aligned open boxes and their lattice discretizations.

A site ``x`` of ``Z^d`` belongs to the discretized domain at scale ``eps`` when the
sup-norm distance from ``x * eps`` to the complement of the domain exceeds ``eps``.
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, EmptyDomain, InvalidShape

BOUNDARY = -1

# Sites whose distance equals eps up to rounding are treated as lying on the
# threshold and excluded; the inequality defining the lattice domain is strict.
_TIE_RTOL = 1e-10


@dataclass(frozen=True)
class ShapeSpec:
    """A finite union of open axis-aligned boxes in dimension 1, 2 or 3."""

    dim: int
    boxes: tuple

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise InvalidShape(f"dimension must be 1, 2 or 3, got {self.dim}")
        if not self.boxes:
            raise InvalidShape("at least one box is required")
        norm = []
        for lo, hi in self.boxes:
            lo = tuple(float(v) for v in np.atleast_1d(lo))
            hi = tuple(float(v) for v in np.atleast_1d(hi))
            if len(lo) != self.dim or len(hi) != self.dim:
                raise InvalidShape(f"box {lo}..{hi} does not have dimension {self.dim}")
            if not all(np.isfinite(lo + hi)):
                raise InvalidShape("box corners must be finite")
            if any(a >= b for a, b in zip(lo, hi)):
                raise InvalidShape(f"box {lo}..{hi} is empty")
            norm.append((lo, hi))
        object.__setattr__(self, "boxes", tuple(norm))

    @property
    def kind(self) -> str:
        return "box" if len(self.boxes) == 1 else "union-of-boxes"

    @classmethod
    def box(cls, lower, upper) -> "ShapeSpec":
        lower = np.atleast_1d(lower)
        return cls(dim=len(lower), boxes=((tuple(lower), tuple(np.atleast_1d(upper))),))

    @classmethod
    def unit_cube(cls, dim: int) -> "ShapeSpec":
        return cls.box([0.0] * dim, [1.0] * dim)

    @classmethod
    def from_dict(cls, data: dict) -> "ShapeSpec":
        try:
            dim = int(data["dim"])
            boxes = tuple((tuple(b[0]), tuple(b[1])) for b in data["boxes"])
        except (KeyError, TypeError, IndexError) as exc:
            raise InvalidShape(f"malformed shape description: {data!r}") from exc
        return cls(dim=dim, boxes=boxes)

    @classmethod
    def from_json(cls, text: str) -> "ShapeSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"dim": self.dim, "boxes": [[list(lo), list(hi)] for lo, hi in self.boxes]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @property
    def lower(self) -> np.ndarray:
        return np.min([lo for lo, _ in self.boxes], axis=0)

    @property
    def upper(self) -> np.ndarray:
        return np.max([hi for _, hi in self.boxes], axis=0)

    def contains(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        inside = np.zeros(len(pts), dtype=bool)
        for lo, hi in self.boxes:
            inside |= np.all((pts > np.asarray(lo)) & (pts < np.asarray(hi)), axis=1)
        return inside

    def volume(self) -> float:
        """Lebesgue measure of the union, by coordinate compression."""
        if len(self.boxes) == 1:
            lo, hi = self.boxes[0]
            return float(np.prod(np.subtract(hi, lo)))
        cuts = [sorted({c for lo, hi in self.boxes for c in (lo[i], hi[i])}) for i in range(self.dim)]
        total = 0.0
        for cell in itertools.product(*[range(len(c) - 1) for c in cuts]):
            mid = [0.5 * (cuts[i][j] + cuts[i][j + 1]) for i, j in enumerate(cell)]
            if self.contains(mid)[0]:
                total += np.prod([cuts[i][j + 1] - cuts[i][j] for i, j in enumerate(cell)])
        return float(total)


def _single_box_distance(points: np.ndarray, lo, hi) -> np.ndarray:
    gap = np.minimum(points - np.asarray(lo), np.asarray(hi) - points)
    return np.clip(gap.min(axis=1), 0.0, None)


def _cube_covered(shape: ShapeSpec, center: np.ndarray, r: float) -> bool:
    """Is the open sup-norm ball of radius ``r`` around ``center`` inside the union?

    Each axis is cut at the box faces lying strictly inside the cube; the cut points
    and the open intervals between them form pieces that are either wholly inside or
    wholly outside each open box, so checking one representative per piece is exact.
    """
    pieces = []
    for i in range(shape.dim):
        a, b = center[i] - r, center[i] + r
        cuts = sorted({c for lo, hi in shape.boxes for c in (lo[i], hi[i]) if a < c < b})
        edges = [a] + cuts + [b]
        reps = [0.5 * (edges[j] + edges[j + 1]) for j in range(len(edges) - 1)]
        pieces.append(reps + cuts)
    for rep in itertools.product(*pieces):
        if not shape.contains(rep)[0]:
            return False
    return True


def _union_distance(shape: ShapeSpec, point: np.ndarray) -> float:
    if not shape.contains(point)[0]:
        return 0.0
    candidates = sorted(
        {abs(point[i] - c) for lo, hi in shape.boxes for i in range(shape.dim) for c in (lo[i], hi[i])}
        - {0.0}
    )
    best = 0.0
    for r in candidates:
        if not _cube_covered(shape, point, r):
            break
        best = r
    return float(best)


def boundary_distance(shape: ShapeSpec, point) -> float | np.ndarray:
    """Sup-norm distance from ``point`` to the complement of ``shape``.

    Accepts a single point or an ``(m, d)`` array; exterior points give 0.
    """
    pts = np.asarray(point, dtype=float)
    single = pts.ndim <= 1
    pts = pts.reshape(-1, shape.dim) if pts.size else pts.reshape(0, shape.dim)
    if pts.shape[1] != shape.dim:
        raise DimensionMismatch(f"point has dimension {pts.shape[1]}, shape has {shape.dim}")
    if len(shape.boxes) == 1:
        lo, hi = shape.boxes[0]
        out = _single_box_distance(pts, lo, hi)
    else:
        out = np.array([_union_distance(shape, p) for p in pts])
    return float(out[0]) if single else out


@dataclass(frozen=True)
class LatticeDomain:
    """Sites of the discretized domain in lexicographic order, with neighbour table.

    ``neighbors[i, 2*j]`` is the index of ``site + e_j`` and ``neighbors[i, 2*j + 1]``
    that of ``site - e_j``; ``BOUNDARY`` marks a neighbour outside the domain.
    """

    eps: float
    sites: np.ndarray
    neighbors: np.ndarray
    shape: ShapeSpec | None = None
    index_of: dict = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.index_of is None:
            object.__setattr__(self, "index_of", {tuple(int(v) for v in s): i for i, s in enumerate(self.sites)})
        self.sites.setflags(write=False)
        self.neighbors.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.sites.shape[1]

    @property
    def n(self) -> int:
        return self.sites.shape[0]

    def __len__(self):
        return self.n

    @property
    def points(self) -> np.ndarray:
        """Continuum positions ``x * eps`` of the sites."""
        return self.sites * self.eps

    def neighbor_list(self, index: int) -> list:
        out = []
        for j in range(self.dim):
            out.append(((j, +1), int(self.neighbors[index, 2 * j])))
            out.append(((j, -1), int(self.neighbors[index, 2 * j + 1])))
        return out

    def edges(self) -> np.ndarray:
        """Interior lattice edges as ``(i, j)`` pairs with ``i < j``."""
        rows, cols = [], []
        for j in range(self.dim):
            nb = self.neighbors[:, 2 * j]
            keep = nb != BOUNDARY
            rows.append(np.nonzero(keep)[0])
            cols.append(nb[keep])
        i = np.concatenate(rows)
        k = np.concatenate(cols)
        return np.stack([np.minimum(i, k), np.maximum(i, k)], axis=1)

    def boundary_edge_count(self) -> np.ndarray:
        return (self.neighbors == BOUNDARY).sum(axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["index"] + [f"x{j}" for j in range(self.dim)])
            for i, s in enumerate(self.sites):
                writer.writerow([i, *(int(v) for v in s)])


def lattice_from_sites(sites, eps: float, shape: ShapeSpec | None = None) -> LatticeDomain:
    """Build the neighbour structure for an arbitrary finite set of integer sites."""
    sites = np.asarray(sites, dtype=np.int64)
    if sites.ndim == 1:
        sites = sites[:, None]
    order = np.lexsort(sites.T[::-1])
    sites = np.ascontiguousarray(sites[order])
    if len(sites) and np.any(np.all(np.diff(sites, axis=0) == 0, axis=1)):
        raise InvalidShape("duplicate sites")
    index_of = {tuple(int(v) for v in s): i for i, s in enumerate(sites)}
    d = sites.shape[1]
    nbrs = np.full((len(sites), 2 * d), BOUNDARY, dtype=np.int64)
    for i, s in enumerate(sites):
        for j in range(d):
            for k, step in enumerate((1, -1)):
                t = list(int(v) for v in s)
                t[j] += step
                nbrs[i, 2 * j + k] = index_of.get(tuple(t), BOUNDARY)
    return LatticeDomain(eps=float(eps), sites=sites, neighbors=nbrs, shape=shape, index_of=index_of)


def discretize(shape: ShapeSpec, eps: float) -> LatticeDomain:
    """Lattice sites ``x`` with ``dist_inf(x*eps, complement) > eps``, lexicographically ordered."""
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    threshold = eps * (1.0 + _TIE_RTOL)
    chunks = []
    for lo, hi in shape.boxes:
        ranges = [np.arange(int(np.ceil(l / eps)), int(np.floor(h / eps)) + 1) for l, h in zip(lo, hi)]
        if any(len(r) == 0 for r in ranges):
            continue
        grid = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, shape.dim)
        chunks.append(grid)
    if not chunks:
        raise EmptyDomain(f"no lattice site qualifies at eps={eps}")
    cand = np.unique(np.concatenate(chunks), axis=0)
    pts = cand * eps
    best = np.zeros(len(cand))
    for lo, hi in shape.boxes:
        best = np.maximum(best, _single_box_distance(pts, lo, hi))
    keep = best > threshold
    if len(shape.boxes) > 1:
        # near overlaps between boxes the single-box distance underestimates
        unsure = np.nonzero(~keep & (best > 0))[0]
        for i in unsure:
            keep[i] = _union_distance(shape, pts[i]) > threshold
    if not keep.any():
        raise EmptyDomain(f"no lattice site qualifies at eps={eps}")
    return lattice_from_sites(cand[keep], eps, shape=shape)


def path_lattice(n: int, eps: float = 1.0) -> LatticeDomain:
    """A 1-d path of ``n`` consecutive sites, realized as the interval (0, (n+3)*eps)."""
    if n < 1:
        raise ValueError("a path needs at least one site")
    return discretize(ShapeSpec.box([0.0], [(n + 3) * eps]), eps)

"""Lattice functions, scaled norms, simplex-wise linear interpolation and block coarsening."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .geometry import LatticeDomain


@dataclass(frozen=True, eq=False)
class LatticeFunction:
    """A finitely supported function on ``Z^d``.

    Stored densely on the box ``origin + [0, values.shape)``; zero elsewhere.
    """

    values: np.ndarray
    origin: np.ndarray
    eps: float

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.int64).reshape(-1))
        if self.values.ndim != len(self.origin):
            raise ValueError("origin and values disagree on the dimension")

    @property
    def dim(self) -> int:
        return self.values.ndim

    @classmethod
    def from_lattice(cls, lattice: LatticeDomain, vector) -> "LatticeFunction":
        lo = lattice.sites.min(axis=0)
        hi = lattice.sites.max(axis=0)
        arr = np.zeros(tuple(hi - lo + 1))
        arr[tuple((lattice.sites - lo).T)] = np.asarray(vector, dtype=float)
        return cls(arr, lo, lattice.eps)

    def at(self, points) -> np.ndarray:
        """Values at integer points ``(m, d)``, zero outside the stored box."""
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.dim) - self.origin
        inside = np.all((pts >= 0) & (pts < np.asarray(self.values.shape)), axis=1)
        out = np.zeros(len(pts))
        if inside.any():
            out[inside] = self.values[tuple(pts[inside].T)]
        return out

    def padded(self, width: int = 1) -> "LatticeFunction":
        return LatticeFunction(np.pad(self.values, width), self.origin - width, self.eps)

    def gradient(self) -> np.ndarray:
        """Forward differences on the box enlarged by one site on each side, shape ``(d, ...)``."""
        F = np.pad(self.values, 1)
        grads = []
        for i in range(self.dim):
            shifted = np.roll(F, -1, axis=i)
            sl = [slice(None)] * self.dim
            sl[i] = slice(-1, None)
            shifted[tuple(sl)] = 0.0
            grads.append(shifted - F)
        return np.stack(grads)

    def gradient_norms(self) -> np.ndarray:
        """Euclidean length of the forward gradient at every site of the padded box."""
        return np.sqrt(np.sum(self.gradient() ** 2, axis=0))

    def __add__(self, other):
        a, b = _common_box(self, other)
        return LatticeFunction(a.values + b.values, a.origin, self.eps)

    def __mul__(self, scalar: float):
        return LatticeFunction(self.values * scalar, self.origin, self.eps)

    __rmul__ = __mul__


def _common_box(f: LatticeFunction, h: LatticeFunction) -> tuple[LatticeFunction, LatticeFunction]:
    lo = np.minimum(f.origin, h.origin)
    hi = np.maximum(f.origin + f.values.shape, h.origin + h.values.shape)

    def embed(g):
        arr = np.zeros(tuple(hi - lo))
        off = g.origin - lo
        arr[tuple(slice(o, o + s) for o, s in zip(off, g.values.shape))] = g.values
        return LatticeFunction(arr, lo, g.eps)

    return embed(f), embed(h)


def scaled_norm(f: LatticeFunction, p: float) -> float:
    """``(eps^d * sum |f|^p)^(1/p)``; ``p = inf`` gives the max norm."""
    if p == np.inf:
        return float(np.abs(f.values).max(initial=0.0))
    if p < 1:
        raise ValueError("p must be at least 1")
    return float((f.eps**f.dim * np.sum(np.abs(f.values) ** p)) ** (1.0 / p))


def scaled_gradient_norm(f: LatticeFunction, p: float = 2) -> float:
    """Scaled norm of the Euclidean length of the forward gradient."""
    g = f.gradient_norms()
    if p == np.inf:
        return float(g.max(initial=0.0))
    return float((f.eps**f.dim * np.sum(g**p)) ** (1.0 / p))


def _corners_from_permutations(base: np.ndarray, perms: np.ndarray) -> np.ndarray:
    """Corner ``z_i = base + e_{perm[0]} + ... + e_{perm[i-1]}`` for ``i = 0..d``; shape ``(m, d+1, d)``."""
    m, d = base.shape
    steps = np.zeros((m, d + 1, d), dtype=np.int64)
    rows = np.arange(m)
    for i in range(d):
        steps[:, i + 1] = steps[:, i]
        steps[rows, i + 1, perms[:, i]] += 1
    return base[:, None, :] + steps


class Interpolant:
    """Continuous piecewise-linear extension of a lattice function to ``R^d``.

    On the cell ``eps*x + [0, eps)^d`` the point ``y`` has fractional coordinates
    ``alpha``; with ``sigma`` sorting them in non-increasing order the value is
    ``f(x) + sum_i alpha_sigma(i) * grad_sigma(i) f(x + e_sigma(1) + ... + e_sigma(i-1))``.
    Ties are resolved by the lexicographically smallest sorting permutation.
    """

    def __init__(self, f: LatticeFunction):
        self.f = f

    @property
    def eps(self):
        return self.f.eps

    @property
    def dim(self):
        return self.f.dim

    def _split(self, y):
        y = np.asarray(y, dtype=float).reshape(-1, self.dim)
        scaled = y / self.eps
        base = np.floor(scaled).astype(np.int64)
        alpha = np.clip(scaled - base, 0.0, 1.0)
        return base, alpha

    def evaluate(self, y, perms=None) -> np.ndarray:
        """Values at points ``(m, d)``; ``perms`` overrides the sorting permutation per point."""
        base, alpha = self._split(y)
        if perms is None:
            perms = np.argsort(-alpha, axis=1, kind="stable")
        perms = np.asarray(perms, dtype=np.int64).reshape(len(base), self.dim)
        a = np.take_along_axis(alpha, perms, axis=1)
        ones = np.ones((len(a), 1))
        zeros = np.zeros((len(a), 1))
        a_ext = np.hstack([ones, a, zeros])
        weights = a_ext[:, :-1] - a_ext[:, 1:]  # (m, d+1), non-negative, sum to 1
        corners = _corners_from_permutations(base, perms)
        vals = self.f.at(corners.reshape(-1, self.dim)).reshape(len(base), self.dim + 1)
        return np.sum(weights * vals, axis=1)

    def __call__(self, y) -> np.ndarray:
        return self.evaluate(y)

    def cell_corners(self, y) -> np.ndarray:
        """All ``2^d`` corners ``x + {0,1}^d`` of the cells containing ``y``; ``(m, 2^d, d)``."""
        base, _ = self._split(y)
        offsets = np.array(list(itertools.product((0, 1), repeat=self.dim)), dtype=np.int64)
        return base[:, None, :] + offsets[None, :, :]

    def cell_base(self, y) -> np.ndarray:
        return self._split(y)[0]

    def to_csv(self, path, points) -> None:
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        vals = self.evaluate(pts)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"y{j}" for j in range(self.dim)] + ["value"])
            for p, v in zip(pts, vals):
                writer.writerow([*(repr(float(c)) for c in p), repr(float(v))])


def interpolate(f: LatticeFunction) -> Interpolant:
    return Interpolant(f)


def interpolant_gradient_norm(f: LatticeFunction) -> float:
    """Exact ``L^2(R^d)`` norm of the gradient of the interpolant.

    Each cell splits into ``d!`` simplices of volume ``eps^d / d!`` on which the
    interpolant is affine; the constant gradients are summed simplex by simplex.
    """
    d, eps = f.dim, f.eps
    F = np.pad(f.values, 1)
    cells = np.stack(np.meshgrid(*[np.arange(s - 1) for s in F.shape], indexing="ij"), axis=-1).reshape(-1, d)
    total = 0.0
    for perm in itertools.permutations(range(d)):
        z = cells.copy()
        sq = np.zeros(len(cells))
        for axis in perm:
            nxt = z.copy()
            nxt[:, axis] += 1
            diff = F[tuple(nxt.T)] - F[tuple(z.T)]
            sq += diff * diff
            z = nxt
        total += sq.sum()
    return math.sqrt(total * eps**d / math.factorial(d) / eps**2)


def stratified_points(d: int, per_cell: int = 16) -> np.ndarray:
    """Fixed quasi-random offsets in ``[0, 1)^d`` used for every cell."""
    return qmc.Sobol(d, scramble=False).random(per_cell)


def interpolant_norm(f: LatticeFunction, p: float, per_cell: int = 16) -> float:
    """Stratified estimate of ``||interpolant||_{L^p(R^d)}`` (16 points per cell by default)."""
    d, eps = f.dim, f.eps
    offsets = stratified_points(d, per_cell)
    cells = f.origin - 1 + np.stack(
        np.meshgrid(*[np.arange(s + 1) for s in f.values.shape], indexing="ij"), axis=-1
    ).reshape(-1, d)
    y = ((cells[:, None, :] + offsets[None, :, :]) * eps).reshape(-1, d)
    vals = np.abs(interpolate(f).evaluate(y))
    if p == np.inf:
        return float(vals.max(initial=0.0))
    return float((eps**d * np.mean(vals.reshape(len(cells), -1) ** p, axis=1).sum()) ** (1.0 / p))


def lift_inner_product(f: LatticeFunction, h: LatticeFunction) -> float:
    """``L^2`` inner product of the cellwise-constant lifts ``eps^(-d/2) f(floor(y/eps))``.

    Each cell has volume ``eps^d`` and the lifted values carry ``eps^(-d/2)`` each.
    """
    a, b = _common_box(f, h)
    cell_volume = a.eps**a.dim
    lift = a.eps ** (-a.dim / 2)
    return float(np.sum((lift * a.values) * (lift * b.values)) * cell_volume)


def coarsen(f: LatticeFunction, L: int) -> LatticeFunction:
    """Block-constant ``f_L(x) = f(L * floor(x / L))``."""
    if L < 1:
        raise ValueError("block size must be at least 1")
    lo = L * np.floor_divide(f.origin, L)
    hi = L * (np.floor_divide(f.origin + np.asarray(f.values.shape) - 1, L) + 1)
    grid = np.stack(np.meshgrid(*[np.arange(a, b) for a, b in zip(lo, hi)], indexing="ij"), axis=-1)
    anchors = L * np.floor_divide(grid.reshape(-1, f.dim), L)
    vals = f.at(anchors).reshape(grid.shape[:-1])
    return LatticeFunction(vals, lo, f.eps)


COARSEN_CONSTANT = {d: 2**d * math.sqrt(d) for d in (1, 2, 3)}


def coarsening_bound(f: LatticeFunction, L: int, check: bool = False) -> tuple[float, float]:
    """``(||f - f_L||_1, 2^d sqrt(d) L ||grad f||_1)`` in unscaled lattice norms."""
    fL = coarsen(f, L)
    a, b = _common_box(f, fL)
    lhs = float(np.abs(a.values - b.values).sum())
    rhs = float(COARSEN_CONSTANT[f.dim] * L * f.gradient_norms().sum())
    if check and lhs > rhs:
        raise AssertionError(f"coarsening bound violated: {lhs} > {rhs}")
    return lhs, rhs


def pointwise_bounds(f: LatticeFunction, y) -> dict:
    """Quantities entering the cellwise sup bounds at points ``y``.

    Returns arrays ``value`` (interpolant), ``corner_max`` (max ``|f|`` over cell
    corners), ``offset`` (``|interpolant - f(x)|``) and ``gradient_max`` (``d`` times
    the largest gradient length over cell corners).
    """
    itp = interpolate(f)
    value = itp.evaluate(y)
    corners = itp.cell_corners(y)
    m, c, d = corners.shape
    corner_vals = f.at(corners.reshape(-1, d)).reshape(m, c)
    grads = np.stack(
        [f.at(corners.reshape(-1, d) + np.eye(d, dtype=np.int64)[i]) - corner_vals.reshape(-1) for i in range(d)]
    )
    grad_len = np.sqrt(np.sum(grads**2, axis=0)).reshape(m, c)
    base_val = f.at(itp.cell_base(y))
    return {
        "value": value,
        "corner_max": np.abs(corner_vals).max(axis=1),
        "offset": np.abs(value - base_val),
        "gradient_max": d * grad_len.max(axis=1),
    }


L2_DEVIATION_CONSTANT = {d: d * 2 ** (d / 2) for d in (1, 2, 3)}
LP_CONSTANT = {d: 2.0**d for d in (1, 2, 3)}

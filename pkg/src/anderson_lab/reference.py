"""Deterministic continuum benchmark: Dirichlet spectrum of ``-Laplacian + U`` on the domain.

The continuum problem is approximated by the deterministic lattice problem
``xi(x) = U(x * eps)`` on three nested resolutions ``eps_ref, eps_ref/2, eps_ref/4``
followed by Richardson extrapolation. Because the lattice domain leaves a layer of
width ``eps`` next to the boundary, the leading error is first order in ``eps``
and the next one second order; the tableau removes both.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .eigen import gap_certificate, gap_threshold, lowest_eigenpairs
from .errors import DegenerateLimit, ResolutionTooCoarse
from .geometry import LatticeDomain, ShapeSpec, discretize, lattice_from_sites
from .interp import Interpolant, LatticeFunction, interpolate
from .operator import assemble
from .potential import ProfileFn

log = logging.getLogger(__name__)

ERROR_ORDERS = (1, 2)


def richardson(values, ratio: float = 2.0, orders=ERROR_ORDERS) -> np.ndarray:
    """Extrapolate a sequence computed at ``h, h/ratio, h/ratio^2, ...`` to ``h = 0``.

    ``values`` has the resolution on axis 0; one leading error order is removed per
    tableau column, so ``len(values)`` must exceed ``len(orders)``.
    """
    row = [np.asarray(v, dtype=float) for v in values]
    for p in orders:
        if len(row) < 2:
            break
        f = ratio**p
        row = [(f * row[i + 1] - row[i]) / (f - 1) for i in range(len(row) - 1)]
    return row[-1]


@dataclass(eq=False)
class ContinuumSpectrum:
    eigenvalues: np.ndarray  # (k,) extrapolated
    eigenfunctions: np.ndarray  # (n_fine, k), L2(D)-normalized samples at the finest resolution
    lattice: LatticeDomain  # finest lattice
    eps_ref: float
    level_eps: list
    level_eigenvalues: np.ndarray  # (levels, k + 1) where available
    level_functions: list = field(repr=False)  # per level (n_level, k), L2-normalized
    level_sites: list = field(repr=False)
    simple: np.ndarray = None  # (k,) gap certificate at the finest level
    extrapolation: str = "richardson(1,2)"

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def dim(self) -> int:
        return self.lattice.dim

    def phi(self, index: int) -> Interpolant:
        """Continuous interpolant of the ``index``-th (1-based) eigenfunction."""
        return interpolate(LatticeFunction.from_lattice(self.lattice, self.eigenfunctions[:, index - 1]))

    def level_lattice(self, level: int) -> LatticeDomain:
        return lattice_from_sites(self.level_sites[level], self.level_eps[level])

    def save(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "eigenvalues": self.eigenvalues.tolist(),
            "eps_ref": self.eps_ref,
            "level_eps": list(self.level_eps),
            "level_eigenvalues": self.level_eigenvalues.tolist(),
            "simple": [bool(s) for s in self.simple],
            "extrapolation": self.extrapolation,
            "shape": self.lattice.shape.to_dict() if self.lattice.shape is not None else None,
        }
        (directory / "spectrum.json").write_text(json.dumps(meta, indent=2))
        arrays = {}
        for i, (s, f) in enumerate(zip(self.level_sites, self.level_functions)):
            arrays[f"sites_{i}"] = s
            arrays[f"functions_{i}"] = f
        np.savez(directory / "eigenfunctions.npz", **arrays)
        return directory

    @classmethod
    def load(cls, directory) -> "ContinuumSpectrum":
        directory = Path(directory)
        meta = json.loads((directory / "spectrum.json").read_text())
        data = np.load(directory / "eigenfunctions.npz")
        nlev = len(meta["level_eps"])
        sites = [data[f"sites_{i}"] for i in range(nlev)]
        funcs = [data[f"functions_{i}"] for i in range(nlev)]
        shape = ShapeSpec.from_dict(meta["shape"]) if meta["shape"] else None
        lattice = lattice_from_sites(sites[-1], meta["level_eps"][-1], shape=shape)
        return cls(
            eigenvalues=np.asarray(meta["eigenvalues"]),
            eigenfunctions=funcs[-1],
            lattice=lattice,
            eps_ref=meta["eps_ref"],
            level_eps=meta["level_eps"],
            level_eigenvalues=np.asarray(meta["level_eigenvalues"]),
            level_functions=funcs,
            level_sites=sites,
            simple=np.asarray(meta["simple"], dtype=bool),
            extrapolation=meta["extrapolation"],
        )


def cache_key(shape: ShapeSpec, U: ProfileFn, k: int, eps_ref: float, levels: int) -> str:
    blob = json.dumps(
        {"shape": shape.to_dict(), "U": U.to_dict(), "k": k, "eps_ref": eps_ref, "levels": levels}, sort_keys=True
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


def homogenized_spectrum(
    shape: ShapeSpec, U: ProfileFn, k: int, eps_ref: float, levels: int = 3, cache_dir=None
) -> ContinuumSpectrum:
    """Lowest ``k`` eigenvalues and eigenfunctions of ``-Laplacian + U`` with Dirichlet boundary."""
    if cache_dir is not None:
        target = Path(cache_dir) / cache_key(shape, U, k, eps_ref, levels)
        if (target / "spectrum.json").exists():
            log.info("reference spectrum cache hit: %s", target)
            return ContinuumSpectrum.load(target)
    coarse = discretize(shape, eps_ref)
    extent = coarse.sites.max(axis=0) - coarse.sites.min(axis=0) + 1
    if np.any(extent < 4 * k):
        raise ResolutionTooCoarse(
            f"eps_ref={eps_ref} gives {extent.tolist()} sites per dimension; need at least {4 * k}"
        )
    level_eps, level_vals, level_funcs, level_sites = [], [], [], []
    lattice = coarse
    for level in range(levels):
        eps = eps_ref / 2**level
        lattice = coarse if level == 0 else discretize(shape, eps)
        H = assemble(lattice, U(lattice.points))
        kk = min(lattice.n, k + 1)
        res = lowest_eigenpairs(H, kk)
        vals = np.full(k + 1, np.nan)
        vals[:kk] = res.eigenvalues
        level_eps.append(eps)
        level_vals.append(vals)
        level_funcs.append(res.eigenvectors[:, :k] * eps ** (-lattice.dim / 2))
        level_sites.append(lattice.sites)
        log.debug("level eps=%g: n=%d lambda=%s", eps, lattice.n, res.eigenvalues[:k])
    level_vals = np.asarray(level_vals)
    extrapolated = richardson(level_vals[:, :k])
    simple = np.array([gap_certificate(level_vals[-1][~np.isnan(level_vals[-1])], i).simple for i in range(1, k + 1)])
    spec = ContinuumSpectrum(
        eigenvalues=extrapolated,
        eigenfunctions=level_funcs[-1],
        lattice=lattice,
        eps_ref=eps_ref,
        level_eps=level_eps,
        level_eigenvalues=level_vals,
        level_functions=level_funcs,
        level_sites=level_sites,
        simple=simple,
    )
    if cache_dir is not None:
        spec.save(target)
    return spec


def check_simple(spec: ContinuumSpectrum, indices) -> None:
    for k in indices:
        if not 1 <= k <= spec.k:
            raise ValueError(f"index {k} outside the computed range 1..{spec.k}")
        if not spec.simple[k - 1]:
            vals = spec.level_eigenvalues[-1]
            other = k - 1 if k >= 2 and vals[k - 1] - vals[k - 2] <= gap_threshold(vals[k - 1]) else k + 1
            pair = tuple(sorted((k, other)))
            raise DegenerateLimit(f"limit eigenvalues {pair} coincide; the CLT needs simple indices", pair=pair)


def covariance_prediction(spec: ContinuumSpectrum, V: ProfileFn, indices) -> np.ndarray:
    """Limit covariance ``int V phi_i^2 phi_j^2`` for the requested (simple) indices.

    The Riemann sum is evaluated at every resolution of the reference run and
    extrapolated with the same tableau as the eigenvalues.
    """
    indices = list(indices)
    check_simple(spec, indices)
    per_level = []
    for eps, sites, funcs in zip(spec.level_eps, spec.level_sites, spec.level_functions):
        d = sites.shape[1]
        w = eps**d * V(sites * eps)
        sq = funcs[:, [k - 1 for k in indices]] ** 2
        per_level.append((sq * w[:, None]).T @ sq)
    cov = richardson(per_level)
    return 0.5 * (cov + cov.T)

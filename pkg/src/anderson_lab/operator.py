"""Sparse Anderson Hamiltonian ``-eps^-2 * lattice Laplacian + xi`` with Dirichlet boundary."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator

from .errors import DimensionMismatch
from .geometry import BOUNDARY, LatticeDomain
from .potential import PotentialField


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """Diagonal plus upper-triangle edge list; the lower triangle is implied."""

    n: int
    eps: float
    dim: int
    diag: np.ndarray
    edges: np.ndarray  # (m, 2), i < j
    hopping: float  # off-diagonal value, -eps^-2

    @property
    def potential(self) -> np.ndarray:
        return self.diag - 2 * self.dim / self.eps**2

    def matvec(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.n:
            raise DimensionMismatch(f"vector of length {v.shape[0]} for operator of size {self.n}")
        out = self.diag.reshape((-1,) + (1,) * (v.ndim - 1)) * v
        i, j = self.edges[:, 0], self.edges[:, 1]
        np.add.at(out, i, self.hopping * v[j])
        np.add.at(out, j, self.hopping * v[i])
        return out

    def quadratic_form(self, f) -> float:
        f = np.asarray(f, dtype=float)
        return float(f @ self.matvec(f))

    def to_sparse(self) -> sp.csr_matrix:
        i, j = self.edges[:, 0], self.edges[:, 1]
        rows = np.concatenate([np.arange(self.n), i, j])
        cols = np.concatenate([np.arange(self.n), j, i])
        vals = np.concatenate([self.diag, np.full(2 * len(i), self.hopping)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n))

    def to_dense(self) -> np.ndarray:
        out = np.diag(self.diag.astype(float))
        i, j = self.edges[:, 0], self.edges[:, 1]
        out[i, j] = self.hopping
        out[j, i] = self.hopping
        return out

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator((self.n, self.n), matvec=self.matvec, matmat=self.matvec, dtype=float)

    def with_potential(self, xi) -> "Hamiltonian":
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.n,):
            raise DimensionMismatch(f"potential of shape {xi.shape} for operator of size {self.n}")
        return Hamiltonian(self.n, self.eps, self.dim, 2 * self.dim / self.eps**2 + xi, self.edges, self.hopping)

    def with_site_value(self, site: int, value: float) -> "Hamiltonian":
        xi = self.potential.copy()
        xi[site] = value
        return self.with_potential(xi)

    def trace(self) -> float:
        return float(self.diag.sum())

    def to_coo_text(self, path) -> None:
        """Write ``row col value`` lines (both triangles) for external cross-checks."""
        m = self.to_sparse().tocoo()
        order = np.lexsort((m.col, m.row))
        with open(path, "w") as fh:
            for r, c, v in zip(m.row[order], m.col[order], m.data[order]):
                fh.write(f"{r} {c} {float(v)!r}\n")


def assemble(lattice: LatticeDomain, field, eps: float | None = None) -> Hamiltonian:
    """Build the Hamiltonian for ``field`` (a ``PotentialField`` or a plain array)."""
    values = field.values if isinstance(field, PotentialField) else np.asarray(field, dtype=float)
    if values.shape != (lattice.n,):
        raise DimensionMismatch(f"field has shape {values.shape}, lattice has {lattice.n} sites")
    eps = lattice.eps if eps is None else float(eps)
    d = lattice.dim
    diag = 2 * d / eps**2 + values
    return Hamiltonian(n=lattice.n, eps=eps, dim=d, diag=diag, edges=lattice.edges(), hopping=-1.0 / eps**2)


def forward_gradient(lattice: LatticeDomain, g) -> np.ndarray:
    """Forward differences ``g(x + e_i) - g(x)`` on every lattice edge touching the domain.

    Returns an array of shape ``(n_edges_total,)`` over all edges of ``Z^d`` with at
    least one endpoint in the domain (zero extension elsewhere). Each such edge is
    counted once, from its lower endpoint.
    """
    g = np.asarray(g, dtype=float)
    parts = []
    for j in range(lattice.dim):
        up = lattice.neighbors[:, 2 * j]
        down = lattice.neighbors[:, 2 * j + 1]
        # edges x -> x+e_j with x in the domain
        g_up = np.where(up != BOUNDARY, g[np.where(up != BOUNDARY, up, 0)], 0.0)
        parts.append(g_up - g)
        # edges y -> x with y = x - e_j outside the domain: 0 -> g(x)
        parts.append(g[down == BOUNDARY])
    return np.concatenate(parts)


def kinetic_energy(lattice: LatticeDomain, eps: float, g) -> float:
    """``eps^-2 * sum over Z^d of |forward gradient of g|^2`` with ``g`` extended by zero."""
    grad = forward_gradient(lattice, g)
    return float(np.dot(grad, grad)) / eps**2


def potential_energy(xi, g) -> float:
    g = np.asarray(g, dtype=float)
    return float(np.dot(np.asarray(xi, dtype=float), g * g))

"""Low-lying eigenpairs and the spectral identities built on them."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, LinearOperator, eigsh, minres

from .errors import DegeneracyCrossing, DegenerateEigenvalue, NoConvergence, NotOrthonormal
from .operator import Hamiltonian

DENSE_LIMIT = 2000
DEFAULT_TOL = 1e-8


def gap_threshold(lam: float) -> float:
    return max(1e-8, 1e-6 * abs(lam))


@dataclass(frozen=True, eq=False)
class EigenResult:
    eigenvalues: np.ndarray  # (k,)
    eigenvectors: np.ndarray  # (n, k), columns normalized to unit l2 norm
    residuals: np.ndarray  # (k,)
    method: str

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    def vector(self, index: int) -> np.ndarray:
        """Eigenvector for the 1-based eigenvalue index."""
        return self.eigenvectors[:, index - 1]

    def sup_norm_constant(self, eps: float, dim: int) -> np.ndarray:
        """``max_x |g(x)| * eps^(-d/2)`` for each eigenvector."""
        return np.abs(self.eigenvectors).max(axis=0) * eps ** (-dim / 2)

    def to_dict(self, vectors: bool = False) -> dict:
        out = {
            "method": self.method,
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "residuals": [float(v) for v in self.residuals],
        }
        if vectors:
            out["eigenvectors"] = self.eigenvectors.T.tolist()
        return out

    def to_json(self, vectors: bool = False) -> str:
        return json.dumps(self.to_dict(vectors=vectors))


@dataclass(frozen=True)
class GapCertificate:
    k: int
    gap_below: float
    gap_above: float
    simple: bool


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the first non-negligible entry of each column positive."""
    vectors = np.array(vectors, dtype=float, copy=True)
    for c in range(vectors.shape[1]):
        col = vectors[:, c]
        big = np.abs(col) > 1e-10 * np.abs(col).max()
        if big.any() and col[np.argmax(big)] < 0:
            vectors[:, c] = -col
    return vectors


def _residuals(H: Hamiltonian, vals, vecs) -> np.ndarray:
    return np.linalg.norm(H.matvec(vecs) - vecs * vals, axis=0)


def _dense(H: Hamiltonian, k: int):
    vals, vecs = sla.eigh(H.to_dense(), subset_by_index=[0, k - 1], driver="evr")
    return vals, vecs


def _iterative(H: Hamiltonian, k: int, tol: float):
    A = H.to_sparse()
    ncv = min(H.n, max(2 * k + 1, 40))
    try:
        vals, vecs = eigsh(A, k=k, which="SA", tol=tol * 1e-2, ncv=ncv, maxiter=max(300, 20 * k))
        vals, vecs = _sorted(vals, vecs)
        if np.all(_residuals(H, vals, vecs) <= tol * (1 + np.abs(vals))):
            return vals, vecs, "iterative"
    except (ArpackNoConvergence, ArpackError):
        pass
    # Shift-invert below the spectrum: the Dirichlet Laplacian is PSD, so min(xi) is a lower bound.
    sigma = float(H.potential.min()) - 1.0
    try:
        vals, vecs = eigsh(A, k=k, sigma=sigma, which="LM", tol=0, ncv=ncv, maxiter=max(1000, 50 * k))
    except ArpackNoConvergence as exc:
        raise NoConvergence("shift-invert Lanczos did not converge", iterations=None, worst_residual=np.inf) from exc
    vals, vecs = _sorted(vals, vecs)
    return vals, vecs, "iterative-shift-invert"


def _sorted(vals, vecs):
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    # one Rayleigh-Ritz pass restores orthonormality lost in clustered spectra
    q, _ = np.linalg.qr(vecs)
    return vals, q


def _rayleigh_ritz(H: Hamiltonian, vecs):
    q, _ = np.linalg.qr(vecs)
    small = q.T @ H.matvec(q)
    w, s = np.linalg.eigh(0.5 * (small + small.T))
    return w, q @ s


def lowest_eigenpairs(H: Hamiltonian, k: int, tol: float = DEFAULT_TOL, method: str | None = None) -> EigenResult:
    """The ``k`` smallest eigenpairs, eigenvectors with a deterministic sign.

    ``method`` is ``"dense"`` or ``"iterative"``; by default dense LAPACK is used up
    to ``DENSE_LIMIT`` sites and implicitly restarted Lanczos (with a shift-invert
    fallback) beyond.
    """
    if not 1 <= k <= H.n:
        raise ValueError(f"k={k} must lie in 1..{H.n}")
    if method is None:
        method = "dense" if H.n <= DENSE_LIMIT else "iterative"
    if method == "dense" or k >= H.n - 1:
        vals, vecs = _dense(H, k)
        tag = "dense"
    elif method == "iterative":
        vals, vecs, tag = _iterative(H, k, tol)
        vals, vecs = _rayleigh_ritz(H, vecs)
    else:
        raise ValueError(f"unknown method {method!r}")
    vecs = fix_signs(vecs)
    res = _residuals(H, vals, vecs)
    bound = tol * (1 + np.abs(vals))
    if np.any(res > bound):
        raise NoConvergence(
            f"residual {res.max():.3e} exceeds tolerance", iterations=None, worst_residual=float(res.max())
        )
    return EigenResult(eigenvalues=np.asarray(vals), eigenvectors=vecs, residuals=res, method=tag)


def eigenvalues(H: Hamiltonian, k: int | None = None) -> np.ndarray:
    """The ``k`` smallest eigenvalues (all of them by default), dense path."""
    k = H.n if k is None else k
    if H.n <= DENSE_LIMIT:
        return sla.eigh(H.to_dense(), eigvals_only=True, subset_by_index=[0, k - 1], driver="evr")
    return lowest_eigenpairs(H, k).eigenvalues


def gap_certificate(values, k: int) -> GapCertificate:
    """Gaps around the ``k``-th (1-based) eigenvalue of a sorted list.

    ``values`` must contain at least ``k + 1`` entries unless ``k`` is the top of the
    spectrum; missing neighbours count as an infinite gap.
    """
    values = np.asarray(values, dtype=float)
    lam = values[k - 1]
    below = lam - values[k - 2] if k >= 2 else np.inf
    above = values[k] - lam if k < len(values) else np.inf
    thr = gap_threshold(lam)
    return GapCertificate(k=k, gap_below=float(below), gap_above=float(above), simple=bool(below > thr and above > thr))


def certify(H: Hamiltonian, k: int) -> tuple[EigenResult, GapCertificate]:
    kk = min(H.n, k + 1)
    res = lowest_eigenpairs(H, kk)
    cert = gap_certificate(res.eigenvalues if kk > k else res.eigenvalues[:k], k)
    return res, cert


def _require_simple(cert: GapCertificate, error=DegenerateEigenvalue):
    if not cert.simple:
        raise error(
            f"eigenvalue {cert.k} is not simple (gaps {cert.gap_below:.3e} below, {cert.gap_above:.3e} above)"
        )


def kyfan_sum(H: Hamiltonian, k: int) -> float:
    """Sum of the ``k`` smallest eigenvalues."""
    if not 1 <= k <= H.n:
        raise ValueError(f"k={k} must lie in 1..{H.n}")
    return float(np.sum(eigenvalues(H, k)))


def _check_orthonormal(psi: np.ndarray, atol: float = 1e-10):
    gram = psi.T @ psi
    err = np.abs(gram - np.eye(psi.shape[1])).max()
    if err > atol:
        raise NotOrthonormal(f"trial system deviates from orthonormality by {err:.3e}")


def kyfan_gap_check(H: Hamiltonian, k: int, psi) -> tuple[float, float]:
    """Both sides of the quantitative Ky Fan bound for a trial orthonormal system.

    ``lhs = sum <psi_i, H psi_i> - Lambda_k`` and ``rhs = (lambda_{k+1} - lambda_k) *
    sum ||P psi_i||^2`` where ``P`` projects off the first ``k`` eigenvectors;
    ``lhs >= rhs`` up to rounding.
    """
    psi = np.asarray(psi, dtype=float).reshape(H.n, -1)
    if psi.shape[1] != k:
        raise ValueError(f"expected {k} trial vectors, got {psi.shape[1]}")
    _check_orthonormal(psi)
    kk = min(H.n, k + 1)
    res = lowest_eigenpairs(H, kk, method="dense" if H.n <= DENSE_LIMIT else None)
    lam = res.eigenvalues
    energy = float(np.einsum("ij,ij->", psi, H.matvec(psi)))
    lhs = energy - float(lam[:k].sum())
    if kk == k:
        return lhs, 0.0
    overlaps = res.eigenvectors[:, :k].T @ psi
    outside = float(k - np.sum(overlaps**2))
    return lhs, float((lam[k] - lam[k - 1]) * max(outside, 0.0))


def eigenvalue_derivative(H: Hamiltonian, k: int, site: int) -> float:
    """``d lambda_k / d xi(site)`` for a simple eigenvalue, which equals ``g_k(site)**2``."""
    res, cert = certify(H, k)
    _require_simple(cert)
    return float(res.vector(k)[site] ** 2)


def finite_difference_derivative(H: Hamiltonian, k: int, site: int, h: float = 1e-4) -> float:
    xi = H.potential
    up = eigenvalues(H.with_site_value(site, xi[site] + h), k)[k - 1]
    down = eigenvalues(H.with_site_value(site, xi[site] - h), k)[k - 1]
    return float((up - down) / (2 * h))


def reduced_green(H: Hamiltonian, k: int, x: int, y: int) -> float:
    """Resolvent at ``lambda_k`` restricted to the complement of the ``k``-th eigenvector.

    Equals ``sum_{i != k} g_i(x) g_i(y) / (lambda_i - lambda_k)``.
    """
    if H.n <= DENSE_LIMIT:
        vals, vecs = np.linalg.eigh(H.to_dense())
        cert = gap_certificate(vals, k)
        _require_simple(cert)
        others = np.arange(H.n) != k - 1
        w = 1.0 / (vals[others] - vals[k - 1])
        return float(np.sum(w * vecs[x, others] * vecs[y, others]))
    res, cert = certify(H, k)
    _require_simple(cert)
    lam, g = res.eigenvalues[k - 1], res.vector(k)

    def project(v):
        return v - g * (g @ v)

    op = LinearOperator((H.n, H.n), matvec=lambda v: project(H.matvec(project(v)) - lam * project(v)), dtype=float)
    rhs = np.zeros(H.n)
    rhs[y] = 1.0
    u, info = minres(op, project(rhs), rtol=1e-12, maxiter=20 * H.n)
    if info != 0:
        raise NoConvergence("MINRES did not converge for the reduced resolvent", iterations=info)
    return float(project(u)[x])


def eigenvector_at(H: Hamiltonian, k: int, site: int) -> float:
    return float(lowest_eigenpairs(H, min(H.n, k)).vector(k)[site])


def rank_one_flow_check(
    H: Hamiltonian, k: int, site: int, xi_from: float, xi_to: float, m: int = 32
) -> tuple[float, float]:
    """Compare ``|g_k(site)|`` after moving ``xi(site)`` from ``xi_from`` to ``xi_to``.

    ``lhs`` re-diagonalizes at ``xi_to``. ``rhs`` transports the amplitude along the
    rank-one path, ``|g(site)| * exp(-int G(site, site; t) dt)``, with the integral by
    ``m``-point Gauss-Legendre quadrature. The minus sign follows from differentiating
    the eigenvalue equation: the amplitude at a site shrinks as its potential grows.
    """
    H0 = H.with_site_value(site, xi_from)
    res0, cert0 = certify(H0, k)
    _require_simple(cert0, DegeneracyCrossing)
    H1 = H.with_site_value(site, xi_to)
    res1, cert1 = certify(H1, k)
    _require_simple(cert1, DegeneracyCrossing)
    lhs = abs(res1.vector(k)[site])
    if xi_to == xi_from:
        return lhs, abs(res0.vector(k)[site])
    nodes, weights = np.polynomial.legendre.leggauss(m)
    half = 0.5 * (xi_to - xi_from)
    ts = xi_from + half * (nodes + 1.0)
    total = 0.0
    for t, w in zip(ts, weights):
        Ht = H.with_site_value(site, t)
        if Ht.n <= DENSE_LIMIT:
            vals, vecs = np.linalg.eigh(Ht.to_dense())
            cert = gap_certificate(vals, k)
            if not cert.simple:
                raise DegeneracyCrossing(f"eigenvalue {k} degenerates at xi={t}")
            others = np.arange(Ht.n) != k - 1
            G = float(np.sum(vecs[site, others] ** 2 / (vals[others] - vals[k - 1])))
        else:
            G = reduced_green(Ht, k, site, site)
        total += w * G
    rhs = abs(res0.vector(k)[site]) * np.exp(-half * total)
    return float(lhs), float(rhs)


def concavity_check(H: Hamiltonian, k: int, site: int, lo: float, hi: float) -> tuple[float, float]:
    """``(Lambda_k at the midpoint, mean of Lambda_k at lo and hi)`` along one coordinate."""
    vals = [kyfan_sum(H.with_site_value(site, v), k) for v in (lo, 0.5 * (lo + hi), hi)]
    return vals[1], 0.5 * (vals[0] + vals[2])


def lipschitz_check(H: Hamiltonian, k: int, xi, eta) -> tuple[float, float]:
    """``|Lambda_k(xi) - Lambda_k(eta)|`` against ``k * c * eps^(d/2) * |xi - eta|_2``.

    ``c`` is the sup-norm constant of the first ``k`` eigenvectors under either
    potential, so the bound is the one that the eigenvector sup-norm implies.
    """
    Hx, He = H.with_potential(xi), H.with_potential(eta)
    rx, re = lowest_eigenpairs(Hx, k), lowest_eigenpairs(He, k)
    c = max(rx.sup_norm_constant(H.eps, H.dim).max(), re.sup_norm_constant(H.eps, H.dim).max())
    lhs = abs(rx.eigenvalues.sum() - re.eigenvalues.sum())
    rhs = k * c * H.eps ** (H.dim / 2) * np.linalg.norm(np.asarray(xi) - np.asarray(eta))
    return float(lhs), float(rhs)

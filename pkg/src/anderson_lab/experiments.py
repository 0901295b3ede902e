"""Monte Carlo campaigns, exact enumeration oracles and fluctuation statistics."""

from __future__ import annotations

import concurrent.futures as cf
import json
import logging
import math
import multiprocessing
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .eigen import lowest_eigenpairs
from .errors import InsufficientSamples, NoConvergence, TooLarge
from .geometry import LatticeDomain, ShapeSpec, discretize
from .operator import assemble, kinetic_energy, potential_energy
from .potential import PotentialSpec, sample, sample_many, two_point_table
from .reference import ContinuumSpectrum, check_simple, covariance_prediction, homogenized_spectrum
from .streams import derive_seed

log = logging.getLogger(__name__)

MAX_FAILURE_RATE = 1e-3
ORACLE_MAX_SITES = 14
TAIL_GRID = 41


@dataclass
class ExperimentConfig:
    shape: ShapeSpec
    potential: PotentialSpec
    eps: list
    indices: list
    realizations: int
    seed: int
    eps_ref: float
    out: str | None = None
    threads: int = 1

    def __post_init__(self):
        self.eps = [float(e) for e in self.eps]
        self.indices = [int(k) for k in self.indices]
        if self.realizations < 2:
            raise ValueError("a campaign needs at least two realizations")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ValueError(f"eps ladder must be strictly decreasing, got {self.eps}")
        if len(set(self.indices)) != len(self.indices) or min(self.indices) < 1:
            raise ValueError(f"eigenvalue indices must be distinct positive integers, got {self.indices}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        return cls(
            shape=ShapeSpec.from_dict(data["shape"]),
            potential=PotentialSpec.from_dict(data["potential"]),
            eps=list(data["eps"]),
            indices=list(data.get("indices", [1])),
            realizations=int(data.get("realizations", 1000)),
            seed=int(data.get("seed", 0)),
            eps_ref=float(data.get("eps_ref", min(data["eps"]) / 4)),
            out=data.get("out"),
            threads=int(data.get("threads", 1)),
        )

    def to_dict(self, runtime: bool = True) -> dict:
        """Serialized config; ``runtime=False`` drops settings that cannot change results."""
        out = {
            "shape": self.shape.to_dict(),
            "potential": self.potential.to_dict(),
            "eps": self.eps,
            "indices": self.indices,
            "realizations": self.realizations,
            "seed": self.seed,
            "eps_ref": self.eps_ref,
        }
        if runtime:
            out.update(out=self.out, threads=self.threads)
        return out


@dataclass(eq=False)
class FluctuationStats:
    """Summary of one rung of a campaign; sample arrays have one row per realization."""

    eps: float
    dim: int
    n_sites: int
    indices: list
    lam: np.ndarray  # (N, m)
    kinetic: np.ndarray  # (N, m)
    residuals: np.ndarray  # (N, m) solver residuals
    identity_residuals: np.ndarray  # (N, m) |lambda - T - <xi, g^2>|
    realization_ids: np.ndarray  # (N,)
    failed: list
    g2_var_scaled: np.ndarray  # (m,) eps^-d sum_x Var(g(x)^2)
    l1_discrepancy: np.ndarray  # (m,) mean over realizations
    predicted_cov: np.ndarray | None = None
    reference_eigenvalues: np.ndarray | None = None
    mean: np.ndarray = field(init=False)
    scaled: np.ndarray = field(init=False)
    cov: np.ndarray = field(init=False)
    skewness: np.ndarray = field(init=False)
    excess_kurtosis: np.ndarray = field(init=False)
    ks_distance: np.ndarray = field(init=False)
    tail_t: np.ndarray = field(init=False)
    tail_exceedance: np.ndarray = field(init=False)
    kinetic_var_scaled: np.ndarray = field(init=False)
    lambda_var_scaled: np.ndarray = field(init=False)

    def __post_init__(self):
        N = len(self.lam)
        self.mean = self.lam.mean(axis=0)
        dev = self.lam - self.mean
        dev[:, np.ptp(self.lam, axis=0) == 0] = 0.0  # a deterministic column has exactly zero spread
        self.scaled = dev * self.eps ** (-self.dim / 2)
        self.cov = np.atleast_2d(np.cov(self.scaled, rowvar=False, ddof=1))
        self.cov = 0.5 * (self.cov + self.cov.T)
        self.skewness, self.excess_kurtosis, self.ks_distance = _shape_diagnostics(self.scaled)
        dev = np.abs(dev)
        top = dev.max(axis=0)
        self.tail_t = np.linspace(0.0, 1.0, TAIL_GRID)[:, None] * np.where(top > 0, 1.05 * top, 1.0)[None, :]
        self.tail_exceedance = (dev[None, :, :] > self.tail_t[:, None, :]).sum(axis=1) / N
        scale = self.eps ** (-self.dim)
        kin_var = self.kinetic.var(axis=0, ddof=1)
        kin_var[np.ptp(self.kinetic, axis=0) == 0] = 0.0
        self.kinetic_var_scaled = scale * kin_var
        self.lambda_var_scaled = self.scaled.var(axis=0, ddof=1)

    @property
    def N(self) -> int:
        return len(self.lam)

    def column(self, k: int) -> int:
        return self.indices.index(k)

    def to_dict(self) -> dict:
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        return {
            "eps": self.eps,
            "dim": self.dim,
            "n_sites": self.n_sites,
            "indices": self.indices,
            "realizations": self.N,
            "failed": self.failed,
            "mean": arr(self.mean),
            "reference_eigenvalues": arr(self.reference_eigenvalues),
            "empirical_cov": arr(self.cov),
            "predicted_cov": arr(self.predicted_cov),
            "skewness": arr(self.skewness),
            "excess_kurtosis": arr(self.excess_kurtosis),
            "ks_distance": arr(self.ks_distance),
            "tail_t": arr(self.tail_t),
            "tail_exceedance": arr(self.tail_exceedance),
            "kinetic_var_scaled": arr(self.kinetic_var_scaled),
            "lambda_var_scaled": arr(self.lambda_var_scaled),
            "g2_var_scaled": arr(self.g2_var_scaled),
            "l1_discrepancy": arr(self.l1_discrepancy),
            "max_solver_residual": float(self.residuals.max()),
            "max_identity_residual": float(self.identity_residuals.max()),
        }

    def write_samples_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("realization,k,lambda,T,residual\n")
            for row, rid in enumerate(self.realization_ids):
                for c, k in enumerate(self.indices):
                    fh.write(
                        f"{int(rid)},{k},{float(self.lam[row, c])!r},{float(self.kinetic[row, c])!r},{float(self.residuals[row, c])!r}\n"
                    )


def _shape_diagnostics(scaled: np.ndarray):
    m = scaled.shape[1]
    skew = np.zeros(m)
    kurt = np.zeros(m)
    ks = np.zeros(m)
    for c in range(m):
        col = scaled[:, c]
        sd = col.std(ddof=1)
        if not sd > 0:
            continue
        skew[c] = sps.skew(col)
        kurt[c] = sps.kurtosis(col)
        ks[c] = sps.kstest((col - col.mean()) / sd, "norm").statistic
    return skew, kurt, ks


# ---------------------------------------------------------------------------
# campaign runner

_WORKER = {}


def _init_worker(ctx):
    _WORKER.clear()
    _WORKER.update(ctx)


def _solve_one(i: int):
    ctx = _WORKER
    lattice: LatticeDomain = ctx["lattice"]
    seed = derive_seed(ctx["seed"], ctx["rung"], i)
    xi = sample(ctx["spec"], lattice, seed).values
    H = assemble(lattice, xi)
    kmax = max(ctx["indices"])
    try:
        res = lowest_eigenpairs(H, min(kmax, lattice.n))
    except NoConvergence as exc:
        return i, None, str(exc)
    out = []
    eps, d = lattice.eps, lattice.dim
    for k in ctx["indices"]:
        g = res.vector(k)
        lam = float(res.eigenvalues[k - 1])
        T = kinetic_energy(lattice, eps, g)
        ident = abs(lam - (T + potential_energy(xi, g)))
        g2 = g * g
        disc = float(np.sum(eps**d * np.abs(g2 * eps ** (-d) - ctx["phi2"][k]))) if ctx["phi2"] else float("nan")
        out.append((lam, T, float(res.residuals[k - 1]), ident, g2, disc))
    return i, out, None


def _run_items(ctx, n_items: int, threads: int):
    if threads <= 1:
        _init_worker(ctx)
        for i in range(n_items):
            yield _solve_one(i)
        return
    mp = multiprocessing.get_context("fork")
    with cf.ProcessPoolExecutor(max_workers=threads, mp_context=mp, initializer=_init_worker, initargs=(ctx,)) as ex:
        # map preserves submission order, so the reduction below is order-deterministic
        yield from ex.map(_solve_one, range(n_items), chunksize=max(1, n_items // (8 * threads)))


def _phi_squared(reference: ContinuumSpectrum | None, lattice: LatticeDomain, indices) -> dict:
    if reference is None:
        return {}
    out = {}
    for k in indices:
        if k <= reference.k:
            out[k] = reference.phi(k)(lattice.points) ** 2
    return out


def run_rung(
    config: ExperimentConfig, rung: int, reference: ContinuumSpectrum | None = None, predicted=None
) -> FluctuationStats:
    eps = config.eps[rung]
    lattice = discretize(config.shape, eps)
    config.potential.site_moments(lattice)  # feasibility, raises InfeasibleSpec
    if max(config.indices) > lattice.n:
        raise ValueError(f"index {max(config.indices)} exceeds the {lattice.n} sites at eps={eps}")
    ctx = {
        "lattice": lattice,
        "spec": config.potential,
        "seed": config.seed,
        "rung": rung,
        "indices": config.indices,
        "phi2": _phi_squared(reference, lattice, config.indices),
    }
    N, m = config.realizations, len(config.indices)
    lam = np.zeros((N, m))
    kin = np.zeros((N, m))
    resid = np.zeros((N, m))
    ident = np.zeros((N, m))
    disc = np.zeros((N, m))
    ok = np.zeros(N, dtype=bool)
    g2_sum = np.zeros((m, lattice.n))
    g2_sq = np.zeros((m, lattice.n))
    g2_shift = None  # sums are taken about the first solved realization to avoid cancellation
    failed = []
    for i, out, err in _run_items(ctx, N, config.threads):
        if out is None:
            failed.append({"realization": i, "error": err})
            continue
        ok[i] = True
        for c, (l, T, r, idr, g2, dsc) in enumerate(out):
            lam[i, c], kin[i, c], resid[i, c], ident[i, c], disc[i, c] = l, T, r, idr, dsc
            if g2_shift is None:
                g2_shift = np.array([o[4] for o in out])
            dg = g2 - g2_shift[c]
            g2_sum[c] += dg
            g2_sq[c] += dg * dg
    if len(failed) > MAX_FAILURE_RATE * N:
        raise NoConvergence(f"{len(failed)} of {N} realizations failed at eps={eps}; aborting campaign")
    n_ok = int(ok.sum())
    g2_mean = g2_sum / n_ok
    g2_var = (g2_sq - n_ok * g2_mean**2) / (n_ok - 1)
    ref_vals = None
    if reference is not None:
        ref_vals = np.array([reference.eigenvalues[k - 1] if k <= reference.k else np.nan for k in config.indices])
    return FluctuationStats(
        eps=eps,
        dim=lattice.dim,
        n_sites=lattice.n,
        indices=list(config.indices),
        lam=lam[ok],
        kinetic=kin[ok],
        residuals=resid[ok],
        identity_residuals=ident[ok],
        realization_ids=np.nonzero(ok)[0],
        failed=failed,
        g2_var_scaled=eps ** (-lattice.dim) * np.clip(g2_var, 0.0, None).sum(axis=1),
        l1_discrepancy=disc[ok].mean(axis=0),
        predicted_cov=predicted,
        reference_eigenvalues=ref_vals,
    )


def prepare_reference(config: ExperimentConfig, cache_dir=None) -> tuple[ContinuumSpectrum, np.ndarray]:
    """Reference spectrum and predicted covariance; raises ``DegenerateLimit`` for non-simple indices."""
    kmax = max(config.indices)
    reference = homogenized_spectrum(config.shape, config.potential.U, kmax, config.eps_ref, cache_dir=cache_dir)
    check_simple(reference, config.indices)
    predicted = covariance_prediction(reference, config.potential.V, config.indices)
    return reference, predicted


def run_campaign(config: ExperimentConfig, reference: ContinuumSpectrum | None = None, cache_dir=None) -> list:
    """One ``FluctuationStats`` per rung of the eps ladder."""
    predicted = None
    if reference is None:
        reference, predicted = prepare_reference(config, cache_dir=cache_dir)
    else:
        check_simple(reference, config.indices)
        predicted = covariance_prediction(reference, config.potential.V, config.indices)
    out = []
    for rung in range(len(config.eps)):
        log.info("rung %d: eps=%g, N=%d", rung, config.eps[rung], config.realizations)
        out.append(run_rung(config, rung, reference, predicted))
    return out


# ---------------------------------------------------------------------------
# post-processing


@dataclass
class ConcentrationProfile:
    t: np.ndarray
    exceedance: np.ndarray
    c_hat: float  # largest c with exceedance <= 4 exp(-c t^2 eps^-d) at every observed t
    c_lsq: float  # least-squares slope of -log(exceedance/4) against t^2 eps^-d
    t_star: float  # deviation where the envelope drops to 1/(100 N)
    max_deviation: float


def concentration_profile(stats: FluctuationStats, k: int | None = None) -> ConcentrationProfile:
    if stats.N < 500:
        raise InsufficientSamples(f"need at least 500 realizations, have {stats.N}")
    c = 0 if k is None else stats.column(k)
    t = stats.tail_t[:, c]
    p = stats.tail_exceedance[:, c]
    s = t**2 * stats.eps ** (-stats.dim)
    obs = (t > 0) & (p > 0)
    dev = float(np.abs(stats.lam[:, c] - stats.mean[c]).max())
    if not obs.any():
        return ConcentrationProfile(t, p, math.inf, math.inf, 0.0, dev)
    y = -np.log(p[obs] / 4.0)
    c_hat = float(np.min(y / s[obs]))
    c_lsq = float(np.dot(s[obs], y) / np.dot(s[obs], s[obs]))
    t_star = math.sqrt(math.log(400.0 * stats.N) / (c_hat * stats.eps ** (-stats.dim)))
    return ConcentrationProfile(t, p, c_hat, c_lsq, t_star, dev)


def _decreasing(values) -> bool:
    values = np.asarray(values, dtype=float)
    return bool(np.all(np.diff(values) < 0))


def energy_decomposition(ladder: list, k: int | None = None) -> dict:
    """Kinetic-energy and eigenvector variances along the ladder."""
    rows = []
    for st in ladder:
        c = 0 if k is None else st.column(k)
        lv = float(st.lambda_var_scaled[c])
        kv = float(st.kinetic_var_scaled[c])
        rows.append(
            {
                "eps": st.eps,
                "kinetic_var_scaled": kv,
                "g2_var_scaled": float(st.g2_var_scaled[c]),
                "lambda_var_scaled": lv,
                "ratio": kv / lv if lv > 0 else 0.0,
                "max_identity_residual": float(st.identity_residuals[:, c].max()),
            }
        )
    kin = [r["kinetic_var_scaled"] for r in rows]
    g2 = [r["g2_var_scaled"] for r in rows]
    degenerate = all(v == 0 for v in kin + g2)
    return {
        "rows": rows,
        "kinetic_decreasing": degenerate or _decreasing(kin),
        "g2_decreasing": degenerate or _decreasing(g2),
        "finest_ratio": rows[-1]["ratio"],
        "finest_ratio_ok": rows[-1]["ratio"] < 0.2,
    }


def eigenfunction_convergence(ladder: list, k: int | None = None) -> dict:
    rows = []
    for st in ladder:
        c = 0 if k is None else st.column(k)
        rows.append({"eps": st.eps, "l1_discrepancy": float(st.l1_discrepancy[c])})
    return {"rows": rows, "decreasing": _decreasing([r["l1_discrepancy"] for r in rows])}


def mean_convergence(ladder: list, k: int | None = None) -> dict:
    rows = []
    for st in ladder:
        c = 0 if k is None else st.column(k)
        ref = None if st.reference_eigenvalues is None else float(st.reference_eigenvalues[c])
        rows.append({"eps": st.eps, "mean": float(st.mean[c]), "gap": None if ref is None else float(abs(st.mean[c] - ref))})
    gaps = [r["gap"] for r in rows]
    return {"rows": rows, "decreasing": None if None in gaps else _decreasing(gaps)}


@dataclass
class Verdict:
    name: str
    value: float
    threshold: float
    status: str  # "pass", "fail" or "degenerate"


def diagnose_samples(scaled: np.ndarray, predicted_cov=None) -> list:
    """Gaussianity and covariance checks on centered, scaled samples ``(N, m)``."""
    scaled = np.asarray(scaled, dtype=float)
    if scaled.ndim == 1:
        scaled = scaled[:, None]
    N, m = scaled.shape
    if N < 1000:
        raise InsufficientSamples(f"need at least 1000 realizations, have {N}")
    skew, kurt, ks = _shape_diagnostics(scaled)
    sd = scaled.std(axis=0, ddof=1)
    se_skew = math.sqrt(6.0 * (N - 2) / ((N + 1) * (N + 3)))
    se_kurt = math.sqrt(24.0 * N * (N - 1) ** 2 / ((N - 3) * (N - 2) * (N + 3) * (N + 5)))
    ks_crit = 1.63 / math.sqrt(N)  # 1% level
    out = []
    for c in range(m):
        if not sd[c] > 0:
            for name in ("skewness", "excess_kurtosis", "ks_distance"):
                out.append(Verdict(f"{name}[{c}]", 0.0, 0.0, "degenerate"))
            continue
        out.append(Verdict(f"skewness[{c}]", float(skew[c]), 4 * se_skew, _status(abs(skew[c]) <= 4 * se_skew)))
        out.append(Verdict(f"excess_kurtosis[{c}]", float(kurt[c]), 4 * se_kurt, _status(abs(kurt[c]) <= 4 * se_kurt)))
        out.append(Verdict(f"ks_distance[{c}]", float(ks[c]), ks_crit, _status(ks[c] <= ks_crit)))
    if predicted_cov is not None:
        cov = np.atleast_2d(np.cov(scaled, rowvar=False, ddof=1))
        pred = np.atleast_2d(predicted_cov)
        for i in range(m):
            for j in range(i, m):
                se = math.sqrt((cov[i, i] * cov[j, j] + cov[i, j] ** 2) / N)
                tol = max(0.15 * abs(pred[i, j]), 4 * se)
                if cov[i, i] == 0 and cov[j, j] == 0 and pred[i, j] == 0:
                    out.append(Verdict(f"cov[{i},{j}]", 0.0, 0.0, "degenerate"))
                    continue
                err = abs(cov[i, j] - pred[i, j])
                out.append(Verdict(f"cov[{i},{j}]", float(cov[i, j]), float(tol), _status(err <= tol)))
    return out


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def clt_diagnostics(stats: FluctuationStats) -> dict:
    verdicts = diagnose_samples(stats.scaled, stats.predicted_cov)
    return {
        "eps": stats.eps,
        "verdicts": [v.__dict__ for v in verdicts],
        "passed": all(v.status != "fail" for v in verdicts),
        "degenerate": all(v.status == "degenerate" for v in verdicts),
    }


# ---------------------------------------------------------------------------
# exact enumeration


@dataclass
class OracleReport:
    k: int
    n_sites: int
    mean: float
    variance: float
    increment_second_moments: np.ndarray  # E[Z_m^2], m = 1..n
    telescoping_residual: float
    orthogonality_residual: float
    variance_residual: float
    increments: np.ndarray = field(repr=False)  # (2^n, n)
    configurations: np.ndarray = field(repr=False)  # (2^n, n)
    eigenvalues: np.ndarray = field(repr=False)  # (2^n,)

    def to_dict(self) -> dict:
        out = {
            "k": self.k,
            "n_sites": self.n_sites,
            "mean": self.mean,
            "variance": self.variance,
            "increment_second_moments": self.increment_second_moments.tolist(),
            "sum_increment_second_moments": float(self.increment_second_moments.sum()),
            "telescoping_residual": self.telescoping_residual,
            "orthogonality_residual": self.orthogonality_residual,
            "variance_residual": self.variance_residual,
        }
        if len(self.configurations) <= 64:
            out["configurations"] = self.configurations.tolist()
            out["eigenvalues"] = self.eigenvalues.tolist()
            out["increments"] = self.increments.tolist()
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def batched_eigenvalues(lattice: LatticeDomain, fields: np.ndarray, k: int) -> np.ndarray:
    """``k``-th eigenvalue for each row of ``fields`` by batched dense diagonalization."""
    base = assemble(lattice, np.zeros(lattice.n)).to_dense()
    mats = np.broadcast_to(base, (len(fields),) + base.shape).copy()
    idx = np.arange(lattice.n)
    mats[:, idx, idx] += fields
    return np.linalg.eigvalsh(mats)[:, k - 1]


def exact_oracle(spec: PotentialSpec, lattice: LatticeDomain, k: int) -> OracleReport:
    """Exact law of ``lambda_k`` and its martingale decomposition in site order."""
    if lattice.n > ORACLE_MAX_SITES:
        raise TooLarge(f"{lattice.n} sites exceeds the oracle limit of {ORACLE_MAX_SITES}")
    configs, probs = two_point_table(spec, lattice)
    n = lattice.n
    lam = batched_eigenvalues(lattice, configs, k)
    # symmetric two-point law: every configuration has weight 2^-n, so conditional
    # expectations are plain averages over the trailing (not yet revealed) axes
    cube = lam.reshape((2,) * n)
    cond = [np.broadcast_to(cube.mean(axis=tuple(range(m, n)), keepdims=True), cube.shape) for m in range(n + 1)]
    Z = np.stack([(cond[m] - cond[m - 1]).reshape(-1) for m in range(1, n + 1)], axis=1)
    mean = float(np.dot(probs, lam))
    var = float(np.dot(probs, (lam - mean) ** 2))
    telescoping = float(np.abs(Z.sum(axis=1) - (lam - mean)).max())
    gram = (Z * probs[:, None]).T @ Z
    off = gram - np.diag(np.diag(gram))
    second = np.diag(gram).copy()
    return OracleReport(
        k=k,
        n_sites=n,
        mean=mean,
        variance=var,
        increment_second_moments=second,
        telescoping_residual=telescoping,
        orthogonality_residual=float(np.abs(off).max()) if n > 1 else 0.0,
        variance_residual=float(abs(second.sum() - var)),
        increments=Z,
        configurations=configs,
        eigenvalues=lam,
    )


def monte_carlo_eigenvalues(spec: PotentialSpec, lattice: LatticeDomain, k: int, N: int, seed: int, batch: int = 20000):
    """``N`` independent samples of ``lambda_k`` using the same per-realization seeding as campaigns."""
    out = np.empty(N)
    for start in range(0, N, batch):
        ids = range(start, min(N, start + batch))
        fields = sample_many(spec, lattice, [derive_seed(seed, 0, i) for i in ids])
        out[start : start + len(fields)] = batched_eigenvalues(lattice, fields, k)
    return out


def variance_standard_error(samples: np.ndarray) -> float:
    """Large-sample standard error of the unbiased sample variance."""
    x = np.asarray(samples, dtype=float)
    c = x - x.mean()
    m2 = np.mean(c**2)
    m4 = np.mean(c**4)
    return math.sqrt(max(m4 - m2**2, 0.0) / len(x))

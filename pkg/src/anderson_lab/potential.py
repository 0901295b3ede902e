"""Independent bounded random potentials with prescribed mean and variance profiles."""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.interpolate import RegularGridInterpolator

from . import streams
from .errors import InfeasibleSpec, TooLarge
from .geometry import LatticeDomain

FAMILIES = ("two-point", "uniform", "beta-scaled")
MAX_ENUMERATION_SITES = 20
_FEAS_TOL = 1e-12


@dataclass(frozen=True)
class ProfileFn:
    """A bounded function on the domain, evaluated at continuum points ``(m, d)``.

    Supported kinds and their parameters:

    * ``constant``: ``value``
    * ``polynomial``: ``terms`` as ``[coef, [p_1, ..., p_d]]`` monomials
    * ``trigonometric``: ``offset`` plus ``terms`` as ``[amp, [k_1, ..., k_d], phase]``,
      each contributing ``amp * cos(2 pi k.x + phase)``
    * ``grid``: ``lower``, ``upper`` and a ``values`` array sampled on a regular grid,
      evaluated by multilinear interpolation
    * ``scaled``: ``factor`` times the profile described by ``base``
    """

    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("constant", "polynomial", "trigonometric", "grid", "scaled"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.kind == "scaled":
            object.__setattr__(self, "_base", ProfileFn.from_dict(self.params["base"]))
        if self.kind == "grid":
            vals = np.asarray(self.params["values"], dtype=float)
            axes = [np.linspace(lo, hi, n) for lo, hi, n in zip(self.params["lower"], self.params["upper"], vals.shape)]
            object.__setattr__(self, "_interp", RegularGridInterpolator(axes, vals))
            object.__setattr__(self, "_lo", np.asarray(self.params["lower"], dtype=float))
            object.__setattr__(self, "_hi", np.asarray(self.params["upper"], dtype=float))

    @classmethod
    def constant(cls, value: float) -> "ProfileFn":
        return cls("constant", {"value": float(value)})

    @classmethod
    def polynomial(cls, terms) -> "ProfileFn":
        return cls("polynomial", {"terms": [[float(c), [int(p) for p in np.atleast_1d(pw)]] for c, pw in terms]})

    @classmethod
    def from_dict(cls, data: dict) -> "ProfileFn":
        data = dict(data)
        kind = data.pop("kind")
        return cls(kind, data)

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if self.kind == "constant":
            return np.full(len(pts), float(self.params["value"]))
        if self.kind == "polynomial":
            out = np.zeros(len(pts))
            for coef, powers in self.params["terms"]:
                out += coef * np.prod(pts ** np.asarray(powers, dtype=float), axis=1)
            return out
        if self.kind == "trigonometric":
            out = np.full(len(pts), float(self.params.get("offset", 0.0)))
            for amp, wave, phase in self.params.get("terms", []):
                out += amp * np.cos(2.0 * np.pi * pts @ np.asarray(wave, dtype=float) + phase)
            return out
        if self.kind == "scaled":
            return float(self.params["factor"]) * self._base(pts)
        return self._interp(np.clip(pts, self._lo, self._hi))

    def sup_norm(self, points) -> float:
        return float(np.max(np.abs(self(points))))


@dataclass(frozen=True)
class PotentialSpec:
    U: ProfileFn
    V: ProfileFn
    family: str = "two-point"
    a: float = -1.0
    b: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if not self.a < self.b:
            raise ValueError(f"support bounds need a < b, got [{self.a}, {self.b}]")

    @classmethod
    def from_dict(cls, data: dict) -> "PotentialSpec":
        return cls(
            U=ProfileFn.from_dict(data["U"]),
            V=ProfileFn.from_dict(data["V"]),
            family=data.get("family", "two-point"),
            a=float(data["a"]),
            b=float(data["b"]),
        )

    def to_dict(self) -> dict:
        return {"family": self.family, "U": self.U.to_dict(), "V": self.V.to_dict(), "a": self.a, "b": self.b}

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_variance_scaled(self, factor: float) -> "PotentialSpec":
        V = ProfileFn("scaled", {"base": self.V.to_dict(), "factor": float(factor)})
        return PotentialSpec(U=self.U, V=V, family=self.family, a=self.a, b=self.b)

    def site_moments(self, lattice: LatticeDomain) -> tuple[np.ndarray, np.ndarray]:
        """Mean and variance at every lattice site, after the feasibility check."""
        pts = lattice.points
        mean = self.U(pts)
        var = self.V(pts)
        tol = _FEAS_TOL * max(1.0, abs(self.a), abs(self.b))
        for i in range(len(pts)):
            m, v = mean[i], var[i]
            reason = None
            if not (np.isfinite(m) and np.isfinite(v)):
                reason = "non-finite profile value"
            elif v < 0:
                reason = f"negative variance {v}"
            elif self.family == "two-point":
                s = np.sqrt(v)
                if m - s < self.a - tol or m + s > self.b + tol:
                    reason = f"two-point values {m - s}, {m + s} leave [{self.a}, {self.b}]"
            elif self.family == "uniform":
                s = np.sqrt(3.0 * v)
                if m - s < self.a - tol or m + s > self.b + tol:
                    reason = f"uniform support [{m - s}, {m + s}] leaves [{self.a}, {self.b}]"
            else:
                w = self.b - self.a
                mu = (m - self.a) / w
                if v > 0 and not (0 < mu < 1 and v / w**2 < mu * (1 - mu)):
                    reason = f"no beta law on [{self.a}, {self.b}] has mean {m} and variance {v}"
                elif v == 0 and not (self.a <= m <= self.b):
                    reason = f"mean {m} outside [{self.a}, {self.b}]"
            if reason is not None:
                site = tuple(int(c) for c in lattice.sites[i])
                raise InfeasibleSpec(f"site {site} (index {i}): {reason}", site=site)
        return mean, var


@dataclass(frozen=True)
class PotentialField:
    values: np.ndarray
    seed: int
    spec_hash: str

    def __len__(self):
        return len(self.values)


def _draw(spec: PotentialSpec, mean: np.ndarray, var: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Values for keys of shape ``(N, 1)`` against sites of shape ``(n,)``."""
    counters = np.arange(len(mean), dtype=np.uint64)[None, :]
    if spec.family == "two-point":
        out = mean + np.sqrt(var) * streams.signs(keys, counters)
    elif spec.family == "uniform":
        u = streams.uniform(keys, counters)
        out = mean + np.sqrt(3.0 * var) * (2.0 * u - 1.0)
    else:
        w = spec.b - spec.a
        mu = (mean - spec.a) / w
        v = var / w**2
        out = np.broadcast_to(mean, (keys.shape[0], len(mean))).copy()
        random = v > 0
        if random.any():
            conc = mu[random] * (1 - mu[random]) / v[random] - 1.0
            p, q = mu[random] * conc, (1 - mu[random]) * conc
            u = streams.uniform(keys, counters[:, random])
            out[:, random] = spec.a + w * stats.beta.ppf(u, p, q)
    return np.clip(out, spec.a, spec.b)


def sample(spec: PotentialSpec, lattice: LatticeDomain, seed: int) -> PotentialField:
    """One realization; site ``i`` is drawn from the stream keyed by ``(seed, i)``."""
    mean, var = spec.site_moments(lattice)
    keys = np.asarray([int(seed) & ((1 << 64) - 1)], dtype=np.uint64)[:, None]
    values = _draw(spec, mean, var, keys)[0]
    return PotentialField(values=values, seed=int(seed), spec_hash=spec.hash())


def sample_many(spec: PotentialSpec, lattice: LatticeDomain, seeds) -> np.ndarray:
    """Realizations for several seeds at once, shape ``(len(seeds), n)``.

    Row ``r`` equals ``sample(spec, lattice, seeds[r]).values`` bit for bit.
    """
    mean, var = spec.site_moments(lattice)
    keys = np.asarray([int(s) & ((1 << 64) - 1) for s in seeds], dtype=np.uint64)[:, None]
    return _draw(spec, mean, var, keys)


def two_point_table(spec: PotentialSpec, lattice: LatticeDomain) -> tuple[np.ndarray, np.ndarray]:
    """All ``2**n`` two-point configurations (rows) and their probabilities.

    Row order is lexicographic with site 0 varying slowest and the lower value
    ``U - sqrt(V)`` first, so that reshaping to ``(2,) * n`` indexes sites by axis.
    """
    if spec.family != "two-point":
        raise ValueError("exact enumeration needs the two-point family")
    if lattice.n > MAX_ENUMERATION_SITES:
        raise TooLarge(f"{lattice.n} sites exceeds the enumeration guard of {MAX_ENUMERATION_SITES}")
    mean, var = spec.site_moments(lattice)
    s = np.asarray(list(itertools.product((-1.0, 1.0), repeat=lattice.n)))
    configs = mean + np.sqrt(var) * s
    probs = np.full(len(configs), 0.5**lattice.n)
    return configs, probs


def enumerate_two_point(spec: PotentialSpec, lattice: LatticeDomain):
    """Yield every ``(PotentialField, probability)`` of the two-point law."""
    configs, probs = two_point_table(spec, lattice)
    h = spec.hash()
    for values, p in zip(configs, probs):
        yield PotentialField(values=values, seed=-1, spec_hash=h), float(p)

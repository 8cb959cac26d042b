"""Monte Carlo initialization of particle lists from prescribed densities.

All randomness flows through :class:`RandomStream`, a thin wrapper around
numpy's counter-based Philox generator. Substreams are derived from the
master seed plus a purpose label, so distinct parts of the pipeline
(forward sampling, adjoint terminal condition, particle creation, ...)
consume disjoint, reproducible streams. Freezing these substreams across
cost evaluations realizes common random numbers: the Monte Carlo reduced
cost becomes a deterministic function of the control, which the Armijo
line search and the finite-difference gradient checks rely on.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import EnvelopeViolation, NonTermination
from .domain import wrap_position

# 1D integral of exp(-1/(1-r^2)) over (-1, 1); normalizes the mollifier bump
BUMP_NORM_1D = 0.4439938161680794


def _purpose_key(purpose: str) -> np.uint64:
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return np.frombuffer(digest[:8], dtype=np.uint64)[0]


@dataclass(frozen=True)
class RandomStream:
    """Seedable, counter-based source of reproducible substreams.

    Identical (seed, purpose) pairs produce byte-identical sample sequences
    on every platform (Philox is specified exactly, independent of the
    machine).
    """

    seed: int

    def generator(self, purpose: str) -> np.random.Generator:
        key = np.array([np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF),
                        _purpose_key(purpose)], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


# ---------------------------------------------------------------------------
# 1D marginals


class Uniform1D:
    def __init__(self, lo: float, hi: float):
        if hi <= lo:
            raise ValueError("need hi > lo")
        self.lo, self.hi = float(lo), float(hi)

    def sample(self, n, rng):
        return rng.uniform(self.lo, self.hi, n)

    def pdf(self, r):
        r = np.asarray(r)
        return np.where((r >= self.lo) & (r < self.hi), 1.0 / (self.hi - self.lo), 0.0)


class Gaussian1D:
    def __init__(self, mean: float, var: float):
        if var <= 0.0:
            raise ValueError("need var > 0")
        self.mean, self.var = float(mean), float(var)

    def sample(self, n, rng):
        return rng.normal(self.mean, np.sqrt(self.var), n)

    def pdf(self, r):
        r = np.asarray(r)
        return np.exp(-0.5 * (r - self.mean) ** 2 / self.var) / np.sqrt(2.0 * np.pi * self.var)


class TwoBeams1D:
    """Equal-weight mixture of N(+center, var) and N(-center, var)."""

    def __init__(self, center: float, var: float):
        if var <= 0.0:
            raise ValueError("need var > 0")
        self.center, self.var = float(center), float(var)

    def sample(self, n, rng):
        r = rng.normal(0.0, np.sqrt(self.var), n)
        signs = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        return r + signs * self.center

    def pdf(self, r):
        r = np.asarray(r)
        s = np.sqrt(self.var)
        a = np.exp(-0.5 * (r - self.center) ** 2 / self.var)
        b = np.exp(-0.5 * (r + self.center) ** 2 / self.var)
        return 0.5 * (a + b) / (np.sqrt(2.0 * np.pi) * s)


class Bump1D:
    """Mollifier bump on (center - radius, center + radius), normalized.

    pdf(r) = exp(-1/(1-u^2)) / (radius * BUMP_NORM_1D) with u = (r-center)/radius.
    Not directly sampleable; used as a rejection-sampling target.
    """

    def __init__(self, center: float, radius: float):
        if radius <= 0.0:
            raise ValueError("need radius > 0")
        self.center, self.radius = float(center), float(radius)

    def pdf(self, r):
        u = (np.asarray(r, dtype=np.float64) - self.center) / self.radius
        out = np.zeros_like(u, dtype=np.float64)
        inside = np.abs(u) < 1.0
        ui = u[inside]
        out[inside] = np.exp(-1.0 / (1.0 - ui * ui)) / (self.radius * BUMP_NORM_1D)
        return out

    @property
    def peak(self) -> float:
        return np.exp(-1.0) / (self.radius * BUMP_NORM_1D)


# ---------------------------------------------------------------------------
# 3D phase-space density specs


class DensitySpec:
    """Base for 3D (x, v1, v2) density specifications."""

    directly_sampleable = False

    def pdf(self, x, v1, v2):
        raise NotImplementedError

    def sample(self, n, rng):
        raise NotImplementedError


class UniformBox(DensitySpec):
    directly_sampleable = True

    def __init__(self, x_range, v1_range, v2_range):
        self.marginals = (Uniform1D(*x_range), Uniform1D(*v1_range), Uniform1D(*v2_range))

    def pdf(self, x, v1, v2):
        mx, m1, m2 = self.marginals
        return mx.pdf(x) * m1.pdf(v1) * m2.pdf(v2)

    def sample(self, n, rng):
        mx, m1, m2 = self.marginals
        return mx.sample(n, rng), m1.sample(n, rng), m2.sample(n, rng)


class GaussianSpec(DensitySpec):
    """Gaussian with diagonal covariance over (x, v1, v2)."""

    directly_sampleable = True

    def __init__(self, mean, var):
        mean = np.asarray(mean, dtype=np.float64)
        var = np.asarray(var, dtype=np.float64)
        if mean.shape != (3,) or var.shape != (3,):
            raise ValueError("mean and var must have shape (3,)")
        if np.any(var <= 0.0):
            raise ValueError("variances must be positive")
        self.mean, self.var = mean, var

    def pdf(self, x, v1, v2):
        out = 1.0
        for coord, mu, s2 in zip((x, v1, v2), self.mean, self.var):
            out = out * np.exp(-0.5 * (np.asarray(coord) - mu) ** 2 / s2) \
                / np.sqrt(2.0 * np.pi * s2)
        return out

    def sample(self, n, rng):
        # one draw call keeps the stream layout stable
        z = rng.normal(0.0, 1.0, (3, n))
        sd = np.sqrt(self.var)
        return (self.mean[0] + sd[0] * z[0],
                self.mean[1] + sd[1] * z[1],
                self.mean[2] + sd[2] * z[2])


class ProductSpec(DensitySpec):
    """Product of one x marginal and two velocity marginals."""

    def __init__(self, x_marginal, v1_marginal, v2_marginal):
        self.marginals = (x_marginal, v1_marginal, v2_marginal)

    @property
    def directly_sampleable(self):
        return all(hasattr(m, "sample") for m in self.marginals)

    def pdf(self, x, v1, v2):
        mx, m1, m2 = self.marginals
        return mx.pdf(x) * m1.pdf(v1) * m2.pdf(v2)

    def sample(self, n, rng):
        mx, m1, m2 = self.marginals
        return mx.sample(n, rng), m1.sample(n, rng), m2.sample(n, rng)


class TabulatedSpec(DensitySpec):
    """General density given by a callable, with an envelope over a helper.

    ``g(x, v1, v2)`` must be a normalized density dominated by
    ``envelope * helper.pdf`` on the sampling region.
    """

    directly_sampleable = False

    def __init__(self, g, helper: DensitySpec, envelope: float):
        if envelope <= 0.0:
            raise ValueError("envelope constant must be positive")
        self.g, self.helper, self.envelope = g, helper, envelope

    def pdf(self, x, v1, v2):
        return self.g(x, v1, v2)


# ---------------------------------------------------------------------------
# sampling operations


def sample_direct(spec: DensitySpec, n: int, rng: np.random.Generator, p_max: float):
    """Draw n i.i.d. particles from a directly sampleable density.

    Positions are wrapped into [0, p_max). Tabulated specs are rejected:
    use sample_rejection for those.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if not spec.directly_sampleable:
        raise ValueError("density is not directly sampleable; use sample_rejection")
    x, v1, v2 = spec.sample(n, rng)
    return wrap_position(np.asarray(x, dtype=np.float64), p_max), \
        np.asarray(v1, dtype=np.float64), np.asarray(v2, dtype=np.float64)


def sample_rejection(g, helper: DensitySpec, envelope: float, n: int,
                     rng: np.random.Generator, p_max: float,
                     rate_floor: float = 1e-4, batch: int = 65536):
    """Acceptance-rejection sampling of n particles from density g.

    Proposals y ~ helper are accepted when u < g(y) / (envelope * helper(y)),
    u ~ U(0, 1). Every proposal is checked against the envelope premise
    g <= envelope * helper; a violation fails fast since the algorithm's
    correctness is gone. A sliding-window acceptance rate below
    ``rate_floor`` raises NonTermination instead of looping forever.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    if envelope <= 0.0:
        raise ValueError("envelope constant must be positive")
    xs, v1s, v2s = [], [], []
    accepted = 0
    window_props = 0
    window_accepts = 0
    window = max(batch * 4, int(50.0 / rate_floor))
    while accepted < n:
        m = batch
        x, v1, v2 = helper.sample(m, rng)
        u = rng.random(m)
        gv = np.asarray(g(x, v1, v2), dtype=np.float64)
        hv = np.asarray(helper.pdf(x, v1, v2), dtype=np.float64)
        bound = envelope * hv
        bad = gv > bound * (1.0 + 1e-12) + 1e-300
        if np.any(bad):
            j = int(np.argmax(bad))
            raise EnvelopeViolation(
                f"g(y) = {gv[j]:.6g} > k*h(y) = {bound[j]:.6g} at "
                f"y = ({x[j]:.6g}, {v1[j]:.6g}, {v2[j]:.6g})")
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0.0, gv / bound, 0.0)
        keep = u < ratio
        xs.append(x[keep])
        v1s.append(v1[keep])
        v2s.append(v2[keep])
        accepted += int(keep.sum())
        window_props += m
        window_accepts += int(keep.sum())
        if window_props >= window:
            if window_accepts < rate_floor * window_props:
                raise NonTermination(
                    f"acceptance rate {window_accepts / window_props:.3g} below "
                    f"floor {rate_floor:.3g}")
            window_props = 0
            window_accepts = 0
    x = np.concatenate(xs)[:n]
    v1 = np.concatenate(v1s)[:n]
    v2 = np.concatenate(v2s)[:n]
    return wrap_position(x, p_max), v1, v2


def sample_spec(spec: DensitySpec, n: int, rng: np.random.Generator, p_max: float):
    """Dispatch to direct or rejection sampling depending on the spec."""
    if isinstance(spec, TabulatedSpec):
        return sample_rejection(spec.g, spec.helper, spec.envelope, n, rng, p_max)
    return sample_direct(spec, n, rng, p_max)

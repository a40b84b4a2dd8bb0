"""Skew-normal distribution kernel.

Densities, additive-representation samplers, and moment formulas for the
univariate skew normal, together with the restricted multivariate variant
used by the crossover engine (scalar dispersion, skewness on the first
coordinate only).  Also hosts the scalar special-function helpers the
E-step needs: the standard normal pdf/cdf pair and the Mills ratio
phi(x)/Phi(x) with a branch that stays accurate for arbitrarily negative
arguments.

A skew-normal variate with shape ``lam`` decomposes additively as

    W = sqrt(1 - delta^2) * U0 + delta * |U1|,   delta = lam / sqrt(1 + lam^2),

with U0, U1 independent standard normals.  All samplers draw the normal
component first and the folded component second, so a shape of zero
consumes the same leading draws as a plain normal stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))
_SQRT_2PI = float(np.sqrt(2.0 * np.pi))


class RngStream:
    """Deterministic random stream with explicit sub-stream splitting.

    Wraps a Philox counter-based bit generator keyed by ``(seed, stream)``
    through numpy's SeedSequence, so the same pair always reproduces the
    bit-identical sequence of draws and distinct streams are statistically
    independent.  A stream has a single owner: never share one instance
    across concurrent workers, give each worker its own ``spawn``.
    """

    algorithm = "philox-4x64"

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream,))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def spawn(self, stream: int) -> "RngStream":
        """Independent sub-stream derived from the same 64-bit seed."""
        return RngStream(self.seed, stream)

    def normal(self, size=None):
        """Standard normal draws."""
        return self.generator.standard_normal(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


@dataclass(frozen=True)
class SnUnivariate:
    """Direct (DP) parameters of a univariate skew normal.

    ``xi`` is the location, ``omega2`` the squared scale and ``lam`` the
    shape; ``lam = 0`` recovers N(xi, omega2).
    """

    xi: float = 0.0
    omega2: float = 1.0
    lam: float = 0.0

    def __post_init__(self):
        if not self.omega2 > 0:
            raise ValueError(f"omega2 must be positive, got {self.omega2}")


@dataclass(frozen=True)
class SnRestrictedMultivariate:
    """Multivariate skew normal with scalar dispersion sigma2 * I.

    Skewness is restricted to the first coordinate (shape ``lam`` there,
    zero elsewhere), matching the error structure of the crossover model:
    the first coordinate is marginally skew normal and the remaining
    coordinates are plain normals.
    """

    mu: np.ndarray
    sigma2: float
    lam: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, dtype=float)))
        if self.mu.ndim != 1:
            raise ValueError("mu must be a vector")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def dim(self) -> int:
        return self.mu.shape[0]


def delta_of_lambda(lam):
    """Map the shape parameter to delta = lam / sqrt(1 + lam^2) in (-1, 1).

    Evaluated as sign(lam)/sqrt(1 + lam^-2) for |lam| > 1 so that huge
    shapes (which arise when an optimizer chases the boundary) do not
    overflow lam^2.
    """
    lam = np.asarray(lam, dtype=float)
    small = np.abs(lam) <= 1.0
    lam_small = np.where(small, lam, 0.0)
    inv_big = np.where(small, 1.0, 1.0 / np.where(small, 1.0, lam))
    out = np.where(
        small,
        lam_small / np.sqrt(1.0 + lam_small * lam_small),
        np.sign(lam) / np.sqrt(1.0 + inv_big * inv_big),
    )
    return float(out) if out.ndim == 0 else out


def normal_pdf_cdf(x):
    """Standard normal density and distribution function at ``x``."""
    x = np.asarray(x, dtype=float)
    phi = np.exp(-0.5 * x * x) / _SQRT_2PI
    Phi = special.ndtr(x)
    if x.ndim == 0:
        return float(phi), float(Phi)
    return phi, Phi


def mills(x):
    """Mills ratio phi(x) / Phi(x).

    For x < 0 the ratio is computed through the scaled complementary error
    function, mills(x) = sqrt(2/pi) / erfcx(-x / sqrt(2)), which avoids the
    0/0 underflow of the naive quotient and tracks the asymptote -x as
    x -> -inf.
    """
    x = np.asarray(x, dtype=float)
    neg = x < 0.0
    out = np.empty_like(x)
    xp = np.where(neg, 0.0, x)
    out[...] = (np.exp(-0.5 * xp * xp) / _SQRT_2PI) / special.ndtr(xp)
    if np.any(neg):
        xn = np.where(neg, x, -1.0)
        out = np.where(neg, SQRT_2_OVER_PI / special.erfcx(-xn / np.sqrt(2.0)), out)
    return float(out) if out.ndim == 0 else out


def sn_pdf(x, params: SnUnivariate):
    """Skew-normal density 2/omega * phi(z) * Phi(lam * z), z = (x - xi)/omega."""
    x = np.asarray(x, dtype=float)
    omega = np.sqrt(params.omega2)
    z = (x - params.xi) / omega
    out = 2.0 / omega * (np.exp(-0.5 * z * z) / _SQRT_2PI) * special.ndtr(params.lam * z)
    return float(out) if out.ndim == 0 else out


def sn_moments(params: SnUnivariate):
    """Mean, variance and skewness implied by the direct parameters.

    The standardized variate has mean delta*sqrt(2/pi), variance
    1 - delta^2*(2/pi) and skewness ((4-pi)/2) * mu_w^3 / sigma_w^3;
    location and scale shift/stretch the first two.
    """
    delta = delta_of_lambda(params.lam)
    mu_w = delta * SQRT_2_OVER_PI
    var_w = 1.0 - delta * delta * (2.0 / np.pi)
    skew = (4.0 - np.pi) / 2.0 * mu_w**3 / var_w**1.5
    omega = np.sqrt(params.omega2)
    return params.xi + omega * mu_w, params.omega2 * var_w, skew


def half_normal_sample(rng: RngStream, size=None):
    """Draws |U| for U standard normal (the standardized half normal)."""
    return np.abs(rng.normal(size))


def sn_sample(params: SnUnivariate, rng: RngStream, size=None):
    """Sample via the additive representation.

    Draws the normal component first, then the folded one, so lam = 0
    reproduces a plain normal stream draw-for-draw.
    """
    u0 = rng.normal(size)
    u1 = rng.normal(size)
    delta = delta_of_lambda(params.lam)
    w = delta * np.abs(u1) + np.sqrt(1.0 - delta * delta) * u0
    return params.xi + np.sqrt(params.omega2) * w


def sn_sample_vector(params: SnRestrictedMultivariate, rng: RngStream, size=None):
    """Sample the restricted multivariate skew normal.

    With skewness on the first coordinate only, the matrix square root
    (I - delta delta^T)^{1/2} is the identity outside the (1,1) entry, so a
    draw is mu + sigma * u1 with the first coordinate replaced by
    mu_1 + sigma * (delta*|u0| + sqrt(1-delta^2)*u1_1).  The normal block u1
    is drawn first; at lam = 0 the result matches a plain normal stream
    componentwise.
    """
    n = params.dim
    shape = (n,) if size is None else (size, n)
    u1 = rng.normal(shape)
    u0 = rng.normal(None if size is None else size)
    delta = delta_of_lambda(params.lam)
    sigma = np.sqrt(params.sigma2)
    out = params.mu + sigma * u1
    out[..., 0] = params.mu[0] + sigma * (
        delta * np.abs(u0) + np.sqrt(1.0 - delta * delta) * u1[..., 0]
    )
    return out

"""A quick tour of the skew-normal kernel: density, sampling, moments.

The skew normal extends the normal with a shape parameter lambda; lambda=0
recovers the normal, positive values skew right.  Everything the mixed-model
engine needs (density, additive-representation sampler, exact moments,
Mills ratio) lives in sncross.skewnormal.
"""

import numpy as np

from sncross import (
    RngStream,
    SnUnivariate,
    delta_of_lambda,
    mills,
    sn_moments,
    sn_pdf,
    sn_sample,
)

# the shape parameter maps to delta = lambda / sqrt(1 + lambda^2)
for lam in (0.0, 1.0, 3.0, 10.0):
    print(f"lambda = {lam:5.1f}  ->  delta = {delta_of_lambda(lam):+.6f}")

# density values along a grid for lambda = 3
params = SnUnivariate(xi=0.0, omega2=1.0, lam=3.0)
grid = np.linspace(-2.0, 3.0, 11)
print("\ndensity 2*phi(x)*Phi(3x):")
for x, f in zip(grid, sn_pdf(grid, params)):
    print(f"  f({x:+.1f}) = {f:.6f}")

# exact moments from the additive representation vs a large sample
mean, var, skew = sn_moments(params)
draws = sn_sample(params, RngStream(seed=1, stream=0), size=200_000)
print("\nmoments (formula vs 2e5 draws):")
print(f"  mean     {mean:+.5f}  vs  {draws.mean():+.5f}")
print(f"  variance {var:+.5f}  vs  {draws.var():+.5f}")
c = draws - draws.mean()
print(f"  skewness {skew:+.5f}  vs  {(c**3).mean() / (c**2).mean()**1.5:+.5f}")

# the Mills ratio phi/Phi drives the E-step; it stays accurate deep in the
# left tail where the naive quotient would collapse to 0/0
print("\nMills ratio:")
for x in (0.0, -2.0, -10.0, -30.0):
    print(f"  mills({x:+.0f}) = {mills(x):.6f}")

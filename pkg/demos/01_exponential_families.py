"""Tour of the exponential-family models behind each data source.

Every source is described by a log-partition function G: its derivative is
the mean of the observations, its second derivative the variance, and the
curvature bracket (l_sq, u_sq) controls both the solver step size and the
regularization weight.
"""

import numpy as np

from heteromc import (
    ExpFamilyModel,
    bregman,
    g_prime,
    g_second,
    g_value,
    sample,
    strong_convexity_bounds,
)

models = [
    ExpFamilyModel("gaussian", 1.0),
    ExpFamilyModel("binomial", 4),
    ExpFamilyModel("poisson"),
    ExpFamilyModel("gamma", 2.0, interval=(-2.0, -0.5)),
    ExpFamilyModel("negbinomial", 3.0, interval=(-2.0, -0.5)),
]

print("family        G(eta0)    mean      variance  l_sq      u_sq")
for m in models:
    lo, hi = m.eval_interval
    eta0 = lo + 0.6 * (hi - lo)
    low, high = strong_convexity_bounds(m)
    print(f"{m.family:12s}  {g_value(m, eta0):8.4f}  {g_prime(m, eta0):8.4f}"
          f"  {g_second(m, eta0):8.4f}  {low:8.4f}  {high:8.4f}")

print()
print("The Bregman divergence of G measures goodness of fit;")
print("for the gaussian family it is the squared error halved:")
print("  bregman(gaussian, 3, 1) =", bregman(models[0], 3.0, 1.0))
print("  bregman(poisson, 1, 0)  =", bregman(models[2], 1.0, 0.0), "= e - 2")

print()
print("Samplers draw observations whose moments match G' and G'':")
pois = models[2]
draws = sample(pois, np.zeros(50_000), rng=0)
print(f"  poisson at eta=0: empirical mean {draws.mean():.4f} (expect 1),"
      f" variance {draws.var():.4f} (expect 1)")

binom = models[1]
draws = sample(binom, np.full(50_000, 0.4), rng=1)
print(f"  binomial(4) at eta=0.4: mean {draws.mean():.4f}"
      f" (expect {g_prime(binom, 0.4):.4f})")

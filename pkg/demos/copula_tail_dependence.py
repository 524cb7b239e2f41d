"""
Gumbel copula: sampling and tail dependence
============================================

Draw pairs from the Gumbel copula with the Marshall-Olkin construction and
watch how often one margin is extreme given that the other is.
"""

import numpy as np
from scipy import stats

from hagrisk.copula import gumbel_sample, upper_tail_dependence
from hagrisk.distributions import positive_stable_sample

rng = np.random.default_rng(0)

# the frailty behind the sampler is a positive stable variable; its Laplace
# transform is exp(-t**a), which a Monte Carlo average should reproduce
a = 0.5
m = positive_stable_sample(a, rng, 10**6)
for t in (0.5, 1.0, 2.0, 4.0):
    print(f"t={t:3.1f}  E[exp(-tM)]={np.exp(-t * m).mean():.5f}  exact={np.exp(-t**a):.5f}")

# Kendall's tau of the copula is 1 - 1/theta
for theta in (1.5, 2.0, 4.0):
    u, v = gumbel_sample(theta, rng, 10**6)
    tau = stats.kendalltau(u, v).statistic
    print(f"theta={theta}  tau={tau:.4f}  1-1/theta={1 - 1 / theta:.4f}")

# conditional exceedance P(V > q | U > q) falls toward lambda_U = 2 - 2**(1/theta)
theta = 2.0
u, v = gumbel_sample(theta, rng, 10**7)
print(f"lambda_U({theta}) = {upper_tail_dependence(theta):.4f}")
for q in (0.9, 0.99, 0.999):
    hit = u > q
    print(f"q={q}  P(V>q | U>q)={np.mean(v[hit] > q):.4f}  from {hit.sum()} pairs")

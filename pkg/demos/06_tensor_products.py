"""Tensorization: product eigenpairs, additive distances, summed bounds.

For a sum potential the coordinates evolve independently: the product of the
per-coordinate eigenfunctions is an eigenfunction with the summed eigenvalue,
the 1-Wasserstein distance for the L1 ground metric is additive over
marginals, and the convergence bound for product initial laws carries a sum
of marginal chi-square divergences instead of a dimension-dependent constant.
"""

import numpy as np

from qsdlab.analytics import ReportConfig, closed_form, decay_report
from qsdlab.grid_measure import GridMeasure, ProductGridMeasure, build_grid, w1_distance
from qsdlab.potential import shifted_power_potential
from qsdlab.spectral import assemble_generator, principal_eigenpair, tensor_eigen

cf = closed_form("brownian_hypercube", N=1.0, n=800)
g = cf.grid
op = assemble_generator(cf.spec, g)
eig = principal_eigenpair(op)

prod = tensor_eigen([eig, eig])
print(f"two Brownian factors: lambda0_total = {prod.lambda0_total:.8f} "
      f"(pi^2/4 = {np.pi**2 / 4:.8f})")

rng = np.random.default_rng(7)
mu = ProductGridMeasure((GridMeasure(g, rng.uniform(0.1, 1, g.n)),
                         GridMeasure(g, rng.uniform(0.1, 1, g.n))))
nu = ProductGridMeasure((GridMeasure(g, rng.uniform(0.1, 1, g.n)),
                         GridMeasure(g, rng.uniform(0.1, 1, g.n))))
total = w1_distance(mu, nu)
parts = [w1_distance(a, b) for a, b in zip(mu.factors, nu.factors)]
print(f"W1 additivity: {total:.12f} = {parts[0]:.12f} + {parts[1]:.12f}")
print()

mu1 = GridMeasure(g, np.exp(-((g.nodes - 0.3) ** 2) / (2 * 0.3**2)))
mu2 = GridMeasure(g, np.exp(-((g.nodes + 0.25) ** 2) / (2 * 0.3**2)))
rep = decay_report(ReportConfig(
    label="brownian 2d", spec=[cf.spec, cf.spec], grid=[g, g],
    initial=ProductGridMeasure((mu1, mu2)),
    times=np.linspace(0.0, 2.0, 41), kappa=cf.constants["kappa"],
))
c_max = max(m.bound_constant for m in rep.marginals)
bound = c_max * rep.chi2[0] * np.exp(-rep.kappa * rep.times)
after = rep.times >= rep.burn_in_time
print("2d product report (curves are marginal sums):")
print(f"  summed chi2 at t=0: {rep.chi2[0]:.4f}; kappa = {rep.kappa:.4f}")
print(f"  summed TV <= C [sum chi2] exp(-kappa t) at all sampled t: "
      f"{bool(np.all(rep.tv[after] <= bound[after] * (1 + 1e-3)))}")
print(f"  fitted rates: tv {rep.fitted_rate_tv:.3f}, w1 {rep.fitted_rate_w1:.3f}")
print()

# mixed product of processes coming down from infinity: the smaller of the
# per-coordinate improved rates bounds every marginal decay rate
spec_a, spec_b = shifted_power_potential(3.0), shifted_power_potential(2.5)
ga, gb = build_grid(0.0, 2.5, 1000), build_grid(0.0, 3.0, 1200)
rep2 = decay_report(ReportConfig(
    label="cdfi 2d", spec=[spec_a, spec_b], grid=[ga, gb],
    initial=ProductGridMeasure((
        GridMeasure(ga, np.exp(-((ga.nodes - 0.8) ** 2) / (2 * 0.25**2))),
        GridMeasure(gb, np.exp(-((gb.nodes - 1.0) ** 2) / (2 * 0.3**2))),
    )),
    times=np.linspace(0.0, 0.8, 41), cdfi=True, lambda0_lower=1.0,
))
print("mixed coming-down-from-infinity product (delta = 3 and 2.5):")
print(f"  per-coordinate kappa~: "
      f"{[round(m.kappa_tilde, 4) for m in rep2.marginals]}, min = {rep2.kappa_tilde:.4f}")
for m in rep2.marginals:
    print(f"  marginal {m.label}: fitted chi2 rate {m.fitted_rate_chi2:.3f} "
          f">= min kappa~ {rep2.kappa_tilde:.3f}: {m.fitted_rate_chi2 >= rep2.kappa_tilde}")

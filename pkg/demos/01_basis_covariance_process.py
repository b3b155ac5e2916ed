"""Walk through the covariance process itself: weight functions, harmonic
averages of basis matrices, and the prior that ties the bases together.
"""

import numpy as np

from tvcov import BasisSet, WeightScheme, eval_weights, lambda_at, log_prior_basis

# Three basis covariance matrices anchored at times 0, 5 and 10.  The
# covariance at any other time is their weighted *harmonic* average, with
# simplex weights from a squared-exponential kernel.
scheme = WeightScheme(centers=[0.0, 5.0, 10.0], bandwidths=3.0)
basis = BasisSet(np.stack([
    np.array([[1.0, 0.3], [0.3, 0.5]]),
    np.array([[2.0, -0.4], [-0.4, 1.0]]),
    np.array([[0.7, 0.1], [0.1, 2.5]]),
]))

print("weights across time (always on the simplex):")
for t in (0.0, 2.5, 5.0, 12.0):
    w = eval_weights(t, scheme)
    print(f"  t={t:5.1f}  w={np.round(w, 3)}  sum={w.sum():.12f}")

print("\ncovariance interpolates between the anchors and extrapolates:")
for t in (0.0, 2.5, 5.0, 12.0):
    lam = lambda_at(t, basis, scheme)
    print(f"  t={t:5.1f}  Lambda(t) eigenvalues={np.round(np.linalg.eigvalsh(lam), 3)}")

# The improper prior on the basis set is zero when all bases coincide and
# strictly negative otherwise, nudging them toward each other.
times = np.linspace(0, 10, 21)
same = BasisSet(np.stack([basis.mats[0]] * 3))
print("\nprior at identical bases:", log_prior_basis(same, scheme, times))
print("prior at distinct bases:  ", log_prior_basis(basis, scheme, times))

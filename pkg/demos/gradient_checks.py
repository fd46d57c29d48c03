"""
Checking every gradient against finite differences
==================================================

Each analytic gradient in the package is compared with a central difference
on small random problems. The relative error is the largest absolute gap
divided by the largest absolute entry of either gradient.
"""

import numpy as np

from c2ae import losses
from c2ae.gradcheck import latent_case_error, run_suite

# The whole suite: network backward pass, both latent variants, ranking
# loss, cross-entropy, and the full objective for all three loss modes.
for result in run_suite(seed=0, cases=50):
    print(result.line())

# The gradient with respect to the label code carries a minus sign on the
# alignment term. Flip it and the check fails immediately.
def flipped(cx, cy, lam, normalize=False):
    c1, _, c3 = losses.penalty_terms(cx, cy, normalize)
    d_cx, _ = losses.latent_grads(cx, cy, lam, normalize)
    return d_cx, 2.0 * c1 + 4.0 * lam * c3.dot(cy)

rng = np.random.default_rng(1)
print("correct sign :", max(latent_case_error(rng) for _ in range(20)))
print("flipped sign :", max(latent_case_error(rng, grad_fn=flipped) for _ in range(20)))

"""Grow a semisimple Frobenius structure from random special initial data.

The residues of the second structure connection are transported along a
path of canonical coordinates. At the end the metric coefficients satisfy
the Darboux-Egoroff equations, the projectors do not depend on the shift
``n``, and the genus-one gradient agrees with the tau-form.
"""

import numpy as np

from isomonodromy import (DeformationPath, StepControl, classification_residuals,
                          genus1_gradient, n_independence_check, projectors_at,
                          random_special_init, validate_special_init)

tight = StepControl(rtol=1e-12, atol=1e-14)
rng = np.random.default_rng(11)
data = random_special_init(3, rng)
print("initial data passes validation:", validate_special_init(data).passed)

u0 = np.array([0.0, 1.0, 0.4 + 0.9j])
path = DeformationPath([u0, u0 + [0.1 + 0.05j, -0.1j, 0.15]])
frame = projectors_at(data, u0, path, step_ctrl=tight)
print("metric coefficients eta_i at the endpoint:", np.round(frame.eta, 6))

rep = classification_residuals(frame, data, step_ctrl=tight)
print(f"homogeneity residual {rep.cond3:.1e}, Darboux-Egoroff residual {rep.cond4:.1e}")
print(f"projectors for n=-2 vs n=3 differ by {n_independence_check(data, path, -2, 3, tight):.1e}")

g = genus1_gradient(frame, data, h=1e-4)
print(f"genus-one identity residual {g.identity_residual:.1e}, "
      f"omega two-route residual {g.omega_residual:.1e}")

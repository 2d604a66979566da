"""Recover the splitting type of a matrix loop.

A loop ``M = U0 z^K W0`` is assembled from a factor holomorphic inside the
unit circle, integer exponents ``K`` and a factor holomorphic outside. The
column reduction finds ``K`` again from ``M`` alone, and its sum agrees with
the winding number of ``det M``. A small perturbation of the identity is
then split by the contraction iteration.
"""

import numpy as np

from isomonodromy import (MatrixLaurentSeries, factor_column_reduction, factor_near_identity,
                          laurent_mul, winding_number)

rng = np.random.default_rng(3)
circle = np.exp(2j * np.pi * np.arange(256) / 256)


def cplx(*shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def has_no_zero_inside(series):
    return winding_number(np.linalg.det(series(circle))) == 0


p, K0 = 3, np.array([2, 0, -1])
while True:
    U0 = MatrixLaurentSeries(np.concatenate([np.eye(p)[None], 0.15 * cplx(2, p, p)]), 0)
    W0 = MatrixLaurentSeries(np.concatenate([0.15 * cplx(2, p, p), np.eye(p)[None]]), -2)
    # W0 must also be invertible outside, so check W0(1/z) inside
    if has_no_zero_inside(U0) and has_no_zero_inside(MatrixLaurentSeries(W0.coeffs[::-1], 0)):
        break
D = MatrixLaurentSeries.from_dict({int(k): np.diag((K0 == k).astype(float)) for k in K0})
M = laurent_mul(laurent_mul(U0, D), W0)

fac = factor_column_reduction(M)
print(f"planted K {K0.tolist()}, recovered K {fac.K.tolist()}")
print(f"winding of det M {winding_number(np.linalg.det(M(circle)))}, sum K {fac.K.sum()}")
print(f"reconstruction residual {fac.residual:.1e}")

B = MatrixLaurentSeries(cplx(5, p, p), -2)
B = MatrixLaurentSeries(0.1 * B.coeffs / B.annulus_norm(0.5, 2.0), -2)
near = factor_near_identity(B)
err = np.abs(near.U(circle) @ near.W(circle) - np.eye(p) - B(circle)).max()
print(f"near-identity split in {len(near.ratios)} iterations, error {err:.1e}")

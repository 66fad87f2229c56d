"""One-sided Lipschitz diagnostics for a few planar fields.

A field a satisfies the one-sided Lipschitz condition (OSLC) with modulus
alpha when <a(y) - a(x), y - x> <= alpha |y - x|^2 for all x, y. Compression
across an interface is allowed, expansion is not. This script estimates the
modulus by pair sampling and inspects the jump of a piecewise field.
"""

from __future__ import annotations

import numpy as np

from oslcflow import (PairSampler, SpaceTimeGrid, estimate_oslc, jump_direction_check,
                      linear_field, mollify, sgn_field, tangential_jump_field)


def main() -> None:
    grid = SpaceTimeGrid.square(2.0, 65)
    sampler = PairSampler(grid.box, grid.hmax)

    print("compressive field a = (-sgn x1, 0)")
    a = sgn_field()
    rep = estimate_oslc(a, 0.0, sampler)
    print(f"  sampled modulus {rep.alpha_hat[0]:.3g} over {rep.pairs_sampled} pairs, claimed {rep.claimed[0]:g}")
    jump = jump_direction_check(a, [0.0, 0.4], 0.0)
    print(f"  jump {jump.jump} = -{jump.lam:g} * normal {jump.normal}: points against the normal")

    print("\nexpansive field a = (+sgn x1, 0), claimed modulus 0")
    rep = estimate_oslc(sgn_field(sign=+1.0), 0.0, sampler)
    print(f"  worst ratio {rep.worst_ratio:.4g} at pair separation ~h: violated = {rep.violated}")

    print("\nmollification keeps the modulus")
    for eps in (4 * grid.hmax, grid.hmax, grid.hmax / 4):
        r = estimate_oslc(mollify(a, eps), 0.0, sampler)
        print(f"  eps = {eps:.4f}: sampled modulus {r.alpha_hat[0]:.3g}")

    print("\nlinear field a = A x with a shear")
    A = np.array([[-1.0, 3.0], [0.0, -1.0]])
    r = estimate_oslc(linear_field(A, box=grid.box), 0.0, sampler)
    print(f"  sampled {r.alpha_hat[0]:.4f}, exact top eigenvalue of (A + A^T)/2 = "
          f"{np.linalg.eigvalsh(0.5 * (A + A.T))[-1]:.4f}")

    print("\na jump tangent to the interface is not colinear with the normal")
    jr = jump_direction_check(tangential_jump_field(), [0.0, 0.0], 0.0)
    print(f"  colinearity error {jr.colinearity_error:.3g}, consistent = {jr.consistent}")


if __name__ == "__main__":
    main()

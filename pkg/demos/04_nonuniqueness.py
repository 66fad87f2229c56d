"""Many flows, one jacobian, and solutions that vanish in the limit.

Each member X_lambda of the flow family solves the characteristic ODE in the
Filippov sense, and they all share the same jacobian. Nonconservative
solutions of the form h(T - t - |x1|, x2) live only inside the cone and vanish
at time T, so uniqueness fails for the forward problem; multiplied by any
reversible conservative solution they give zero, which is why the duality
pairing cannot see them.
"""

from __future__ import annotations

import numpy as np

from oslcflow import (SgnExampleSpec, SpaceTimeGrid, nonuniqueness_demo, sgn_general_conservative,
                      sgn_general_nonconservative)
from oslcflow.shapes import Affine, Const


def main() -> None:
    grid = SpaceTimeGrid.square(2.0, 65, nt=21)
    rep = nonuniqueness_demo(grid=grid)
    print(f"largest gap between X_0 and X_1: {rep.flow_difference:.3f}")
    print(f"largest gap between their jacobians: {rep.jacobian_difference:.3f}")
    print(f"numeric flow to X_0: {rep.distance_to_filippov:.4f}; "
          f"to X_1 deep in the cone: {rep.distance_to_other:.3f}")
    print(f"semigroup error: exact family {rep.oracle_semigroup:.1e}, numeric {rep.numeric_semigroup:.1e}")

    spec_p = SgnExampleSpec(h=Affine((1.0, 0.0)))
    spec_pi = SgnExampleSpec(psi=Const(1.0))
    x = grid.nodes
    for t in (0.0, 0.5, 1.0):
        p = sgn_general_nonconservative(spec_p, t, x)
        pi = sgn_general_conservative(spec_pi, t, x)
        print(f"t = {t:.1f}: max |p| {np.abs(p).max():.3f}, max |p pi| {np.abs(p * pi).max():.3f}")


if __name__ == "__main__":
    main()

"""Backward conservative and forward nonconservative solutions in duality.

The backward problem d_t pi + div(a pi) = 0 with final data pi_T is solved by
pushing pi_T forward with the transport flow; the forward problem
d_t u + a . grad u = 0 by following characteristics backward. The pairing
int u(t) pi(t) dx stays constant in time, which is what ties the two notions
of solution together. Inside the cone |x1| < T - t the reversible pi
vanishes: mass has already been concentrated onto the interface.
"""

from __future__ import annotations

import numpy as np

from oslcflow import (SpaceTimeGrid, duality_pairing, l1_trace, sgn_field,
                      solve_backward_reversible, solve_forward_duality, weak_residual)
from oslcflow.shapes import Affine, Bump


def main() -> None:
    a = sgn_field()
    for n in (33, 65):
        grid = SpaceTimeGrid.square(2.0, n, nt=51)
        pi = solve_backward_reversible(a, Bump((0.3, 0.2), 0.7), grid)
        u = solve_forward_duality(a, Affine((1.0, 0.0)), grid)
        pairing = duality_pairing(u, pi)
        l1 = l1_trace(pi)
        res = weak_residual(pi, a).max_residual
        inside = np.abs(grid.nodes[..., 0]) < 0.5 - 2 * grid.hmax
        print(f"{n} x {n}: pairing drift {pairing.drift:.2e}, "
              f"L1 trace from {l1[0]:.4f} to {l1[-1]:.4f}, weak residual {res:.2e}, "
              f"max |pi(0.5)| in the cone {np.abs(pi.at(0.5)[inside]).max():.2e}")
    print("\nthe pairing drift shrinks with h, the L1 trace stays constant, and the")
    print("reversible solution cancels inside the cone up to the stencil width")


if __name__ == "__main__":
    main()

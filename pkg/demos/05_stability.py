"""Weak stability under perturbations of the coefficient.

Replace a by a_n, either a mollification of shrinking width or an
oscillation sin(n x1)/n added to the first component, keeping the same
one-sided bound. Test-function functionals of the solutions pi_n, a_n pi_n
and u_n approach those of the limit. The 1-D version runs in about a second.
"""

from __future__ import annotations

import numpy as np

from oslcflow import SpaceTimeGrid, sgn_field, stability_experiment


def main() -> None:
    grid = SpaceTimeGrid(box=((-3.0, 3.0),), nx=(241,), nt=21)
    data = {"pi_T": {"shape": "bump", "center": [0.3], "radius": 0.6},
            "u0": {"shape": "sine", "freq": [2.0]}}
    for schedule in ({"kind": "mollify", "eps0_h": 16, "count": 5},
                     {"kind": "oscillate", "n": [1, 2, 4, 8, 16]}):
        rep = stability_experiment(sgn_field(dim=1), schedule, data, grid)
        print(f"{schedule['kind']}: members {rep.index}")
        for name, series in (("pi", rep.dev_pi.max(axis=1)), ("a pi", rep.dev_api.max(axis=1)),
                             ("u", rep.dev_u)):
            print(f"  {name:5s} deviations {np.array2string(series, precision=3)}")
        print(f"  sampled moduli of the members {np.round(rep.alpha_hat_seq, 6).tolist()}")


if __name__ == "__main__":
    main()

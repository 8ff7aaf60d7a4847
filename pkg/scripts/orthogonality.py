"""Gradient sensitivity slopes for every loss, corrected and uncorrected."""

import numpy as np

from _common import parser, save_table

from ortho_m.simulation.checks import R_GRID, run_orthogonality


def main():
    p = parser(__doc__, reps=1)
    p.add_argument("--n-mc", type=int, default=1_000_000)
    args = p.parse_args()
    rows = []
    for model in ("plr", "logit-te", "missing", "games"):
        # the partially linear and logistic losses have no uncorrected variant
        for orth in (True, False) if model in ("missing", "games") else (True,):
            rep = run_orthogonality(model, orth, n_mc=args.n_mc, r_grid=R_GRID, seed=args.seed)
            rows.append((model, "ortho" if orth else "naive", float(rep.slope), float(np.max(rep.noise_floor))))
            print(f"{model:<9} {rows[-1][1]:<6} slope {rep.slope:.3f}  noise floor {np.max(rep.noise_floor):.2e}")
    print(f"wrote {save_table(args.out, f'orthogonality_seed{args.seed}', ['model', 'loss', 'slope', 'noise_floor'], rows)}")


if __name__ == "__main__":
    main()

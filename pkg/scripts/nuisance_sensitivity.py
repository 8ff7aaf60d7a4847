"""Missing data: shift of the estimate when the true nuisance is moved a
distance eps along a fixed direction, for the corrected and IPS losses."""

import numpy as np

from _common import parser, save_table

from ortho_m.estimators import caption_lambda, fit_second_stage
from ortho_m.simulation import generate, preset
from ortho_m.simulation.checks import orthogonality_design
from ortho_m.solver import SolverConfig


def main():
    p = parser(__doc__, reps=50)
    p.add_argument("--n", type=int, default=1_000_000)
    p.add_argument("--eps", default="0.05,0.1,0.2,0.4")
    args = p.parse_args()
    eps = [float(v) for v in args.eps.split(",")]
    cfg = preset("missing", n=args.n, seed=args.seed)
    design = orthogonality_design("missing")
    solver = SolverConfig(tol=1e-12, max_iters=50_000)
    lam = caption_lambda(args.n, cfg.p, "missing")
    dist = {True: [], False: []}
    for rep in range(args.reps):
        data, truth = generate(cfg, rep)
        g0 = truth.nuisance(data)
        gd = design.perturb(data, g0)
        for orth in dist:
            base = fit_second_stage(data, "missing", g0, lam, orth, cfg=solver, gram=True).theta_hat
            dist[orth].append([
                np.linalg.norm(fit_second_stage(data, "missing", {k: g0[k] + e * (gd[k] - g0[k]) for k in g0},
                                                lam, orth, cfg=solver, gram=True).theta_hat - base)
                for e in eps])
    med = {o: np.median(dist[o], axis=0) for o in dist}
    for o, name in ((True, "Ortho"), (False, "IPS")):
        slope = np.polyfit(np.log(eps), np.log(med[o]), 1)[0]
        print(f"{name:<6} medians {np.round(med[o], 6).tolist()}  log-log slope {slope:.2f}")
    rows = [(e, float(med[True][j]), float(med[False][j])) for j, e in enumerate(eps)]
    print(f"wrote {save_table(args.out, f'sensitivity_seed{args.seed}', ['eps', 'ortho', 'ips'], rows)}")


if __name__ == "__main__":
    main()

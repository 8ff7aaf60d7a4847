"""Partially linear model: Ortho vs Direct as the nuisance support grows."""

from _common import parser, save_table

from ortho_m.simulation import preset, run_replications


def main():
    p = parser(__doc__, reps=50)
    p.add_argument("--grid", default="1,5,10,20", help="comma-separated k_alpha = k_beta values")
    args = p.parse_args()
    rows = []
    for ka in (int(v) for v in args.grid.split(",")):
        cfg = preset("plr", args.scale, k_alpha=ka, k_beta=ka, seed=args.seed,
                     n_replications=args.reps)
        rep = run_replications(cfg, ["Ortho", "OrthoPlugIn", "Direct", "Oracle"], threads=args.threads)
        med = [rep.median(m) for m in rep.methods]
        rows.append((ka, *med))
        print(f"k_alpha={ka:>3}  " + "  ".join(f"{m} {v:.4f}" for m, v in zip(rep.methods, med)))
    path = save_table(args.out, f"plr_sweep_{args.scale}_seed{args.seed}",
                      ["k_alpha", "Ortho", "OrthoPlugIn", "Direct", "Oracle"], rows)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()

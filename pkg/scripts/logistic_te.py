"""Logistic treatment effects: Ortho vs Direct vs Oracle."""

from _common import parser, save

from ortho_m.simulation import preset, run_replications


def main():
    args = parser(__doc__, reps=50).parse_args()
    cfg = preset("logit-te", args.scale, seed=args.seed, n_replications=args.reps)
    rep = run_replications(cfg, threads=args.threads)
    for m in rep.methods:
        print(f"{m:<8} median l2 {rep.median(m):.4f}")
    print(f"wrote {save(args.out, f'logit_te_{args.scale}_seed{args.seed}', rep)}")


if __name__ == "__main__":
    main()

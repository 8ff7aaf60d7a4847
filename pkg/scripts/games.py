"""Two-player entry game, both equilibrium designs."""

from _common import parser, save

from ortho_m.simulation import preset, run_replications


def main():
    p = parser(__doc__, reps=50)
    p.add_argument("--variants", default="DGP1,DGP2")
    p.add_argument("--sigma-x", type=float, default=None)
    args = p.parse_args()
    over = {} if args.sigma_x is None else {"sigma_x": args.sigma_x}
    for variant in args.variants.split(","):
        cfg = preset("games", args.scale, variant=variant, seed=args.seed,
                     n_replications=args.reps, **over)
        rep = run_replications(cfg, threads=args.threads)
        print(variant + "  " + "  ".join(f"{m} {rep.median(m):.4f}" for m in rep.methods))
        print(f"wrote {save(args.out, f'games_{variant}_{args.scale}_seed{args.seed}', rep)}")


if __name__ == "__main__":
    main()

"""Missing outcomes: Ortho, IPS, Direct and the two oracle variants."""

from _common import parser, save

from ortho_m.simulation import MethodContext, preset, run_replications


def main():
    p = parser(__doc__, reps=100)
    p.add_argument("--direct-cv", action="store_true")
    p.add_argument("--set", action="append", default=[], metavar="FIELD=VALUE",
                   help="design override, e.g. --set sigma_x=2")
    args = p.parse_args()
    over = {}
    for item in args.set:
        k, _, v = item.partition("=")
        over[k] = type(getattr(preset("missing"), k))(v)
    cfg = preset("missing", args.scale, seed=args.seed, n_replications=args.reps, **over)
    rep = run_replications(cfg, ctx=MethodContext(seed=args.seed, direct_cv=args.direct_cv),
                           threads=args.threads)
    for m in rep.methods:
        print(f"{m:<12} median l2 {rep.median(m):.4f}")
    print(f"wrote {save(args.out, f'missing_{args.scale}_seed{args.seed}', rep)}")


if __name__ == "__main__":
    main()

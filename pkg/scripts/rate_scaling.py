"""Error of the oracle-nuisance fit as n doubles (partially linear, p fixed)."""

from _common import parser, save_table

from ortho_m.simulation import preset, run_replications


def main():
    p = parser(__doc__, reps=100)
    p.add_argument("--ns", default="1000,2000,4000")
    args = p.parse_args()
    rows, prev = [], None
    for n in (int(v) for v in args.ns.split(",")):
        rep = run_replications(preset("plr", n=n, seed=args.seed, n_replications=args.reps),
                               ["Oracle"], threads=args.threads)
        med = rep.median("Oracle")
        ratio = prev / med if prev else float("nan")
        rows.append((n, med, ratio))
        print(f"n={n:>6}  median l2 {med:.4f}  ratio {ratio:.3f}")
        prev = med
    print(f"wrote {save_table(args.out, f'rate_seed{args.seed}', ['n', 'median_l2', 'ratio'], rows)}")


if __name__ == "__main__":
    main()

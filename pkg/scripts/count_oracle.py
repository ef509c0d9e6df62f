"""Exact Count accuracy from per-round binomial laws, next to a simulated estimate."""
import argparse

from crnsim.count import CountConfig, exact_in_range_probability, simulate_count


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--delta-max", type=int, default=32)
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--ms", default="1,3,8,17,32")
    args = ap.parse_args()
    cfg = CountConfig(args.n, args.delta_max)
    print(f"round length {cfg.round_len}, rounds {cfg.num_rounds}, trigger threshold {cfg.threshold:.4g}")
    print(f"{'m':>4} {'exact [m,4m]':>13} {'exact (m/2,4m]':>15} {'simulated [m,4m]':>17}")
    for m in (int(x) for x in args.ms.split(",")):
        p = exact_in_range_probability(m, cfg, m, 4 * m)
        q = exact_in_range_probability(m, cfg, m / 2 + 1e-9, 4 * m)
        sim = sum(m <= simulate_count(m, cfg, s).estimate <= 4 * m for s in range(args.trials)) / args.trials
        print(f"{m:>4} {p:>13.4f} {q:>15.4f} {sim:>17.3f}")


if __name__ == "__main__":
    main()

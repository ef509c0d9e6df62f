"""Median slots to full discovery on stars, swept over c and over Δ, with log-log slopes."""
import argparse

from crnsim.harness import ExperimentConfig, sweep


def show(title, res):
    print(title)
    print(f"  {'value':>6} {'median':>10} {'success':>8}")
    for p in res["points"]:
        s = p["summary"]
        print(f"  {p['value']:>6} {str(s['median']):>10} {s['success_rate']:>8.2f}")
    fit = res["fit"]
    print(f"  slope {fit['slope']:.3f}, rms residual {fit['rms_residual']:.3f}" if fit else f"  {res['fit_refused']}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--seed", type=int, default=3)
    ap.add_argument("--A", type=float, default=8.0, help="A1 = A2 multiplier")
    args = ap.parse_args()
    common = dict(trials=args.trials, master_seed=args.seed, A1=args.A, A2=args.A)
    show("channels c (star, Δ=4, k=1)",
         sweep(ExperimentConfig("cseek", generator="star", gen_params=dict(delta=4, k=1), **common),
               "c", [4, 8, 16, 32]))
    show("degree Δ (star, c=4, k=2)",
         sweep(ExperimentConfig("cseek", generator="star", gen_params=dict(c=4, k=2), **common),
               "delta", [4, 8, 16, 32]))


if __name__ == "__main__":
    main()

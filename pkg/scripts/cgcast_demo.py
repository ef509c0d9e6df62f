"""One global broadcast on a generated network, printed stage by stage."""
import argparse

from crnsim.cgcast import CGCastConfig, cgcast, coloring_violations
from crnsim.topology import gen_complete_tree, gen_random


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--network", choices=("random", "tree"), default="random")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if args.network == "random":
        net = gen_random(16, 8, 4, 2, 4, 0.3, args.seed)
    else:
        net = gen_complete_tree(3, 3, 3, args.seed)
    print(net.params)
    res = cgcast(net, 0, b"hello", CGCastConfig(), args.seed)
    print(f"coloring: colored={res.colored} phases={res.phases_used} "
          f"violations={coloring_violations(res.colors, net.params.delta_max)}")
    print(f"flagged edges: {res.flagged_edges}, channel errors: {res.channel_errors}")
    for stage, slots in res.slots.items():
        print(f"  {stage:>15}: {slots} slots")
    print(f"informed at (dissemination slot): {dict(sorted(res.informed_at.items()))}")
    print(f"all informed after {res.all_informed_time} dissemination slots")


if __name__ == "__main__":
    main()

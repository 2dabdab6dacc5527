"""Size sweeps: per-outer-iteration cost when doubling p, n, and the number
of penalty terms. Mirrors `sepqn bench --axis all`.

Usage: python scripts/run_scaling.py [doublings]
"""
import sys

from sepqn.bench import AXES, cost_ratios, run_axis


def main():
    doublings = int(sys.argv[1]) if len(sys.argv) > 1 else 1
    for axis in AXES:
        points = run_axis(axis, doublings=doublings)
        print(f"axis {axis}:")
        for pt in points:
            print(f"  size={pt.size:7d} outer={pt.outer_iterations:3d} "
                  f"mean work/iter={pt.mean_work:.3e}")
        ratios = ", ".join(f"{r:.3f}" for r in cost_ratios(points))
        print(f"  doubling ratios: [{ratios}]  (linear scaling -> 2.0)")


if __name__ == "__main__":
    main()

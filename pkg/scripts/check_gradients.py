"""Finite-difference gradient check over a grid of tiny GAN specs."""
import argparse
import itertools

from cyclegen.rcgan import GanSpec, gradient_check


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--tol", type=float, default=1e-4)
    args = ap.parse_args()
    worst = 0.0
    for l, hidden in itertools.product((2, 4, 8), (1, 2, 4)):
        spec = GanSpec(l=l, d=2, g_hidden=hidden, d_hidden=hidden)
        err = gradient_check(spec, seed=args.seed)
        worst = max(worst, err)
        print(f"l={l} hidden={hidden}: max rel err {err:.2e}")
    print(f"worst {worst:.2e} -> {'PASS' if worst < args.tol else 'FAIL'}")
    return 0 if worst < args.tol else 1


if __name__ == "__main__":
    raise SystemExit(main())

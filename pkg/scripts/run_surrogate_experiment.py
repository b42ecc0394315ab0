"""Original-vs-augmented predictor comparison on the surrogate battery.

    python scripts/run_surrogate_experiment.py --seeds 0 1 2 3 4 --out results.json
"""
import argparse
import json
import logging
import time


from cyclegen import experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--models", nargs="+", default=["GRU", "LSTM"])
    ap.add_argument("--gan", action="store_true", help="also report GAN equilibrium and overlap")
    ap.add_argument("--out", help="write per-seed RMSEs as JSON")
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)

    split = experiment.surrogate_split()
    if args.gan:
        t0 = time.time()
        run = experiment.train_and_score_gan(split)
        print(f"GAN: held-out D={run.held_out_d:.3f} overlap(PCA)={run.overlap_pca:.3f} "
              f"sensitivity={run.sensitivity:.2e} ({time.time() - t0:.0f}s)")

    trials = []
    for seed in args.seeds:
        t0 = time.time()
        tr = experiment.augmentation_trial(split, seed, models=args.models)
        trials.append(tr)
        cells = " ".join(f"{m}/{d}={v:.4f}" for (m, d), v in sorted(tr.rmse.items()))
        print(f"seed {seed}: {cells} ({time.time() - t0:.0f}s)", flush=True)

    for m in args.models:
        orig = experiment.median_rmse(trials, m, "original")
        aug = experiment.median_rmse(trials, m, "augmented")
        print(f"{m}: median RMSE original={orig:.4f} augmented={aug:.4f} "
              f"({'augmented <= original' if aug <= orig else 'augmented worse'})")
    if args.out:
        with open(args.out, "w") as fh:
            json.dump([{"seed": t.seed, **{f"{m}_{d}": v for (m, d), v in t.rmse.items()}}
                       for t in trials], fh, indent=2)


if __name__ == "__main__":
    main()

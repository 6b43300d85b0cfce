"""Sweep the KL weight beta for the convolutional VAE and log per-beta metrics."""
import argparse
import json

from cvsqi import experiment

BETAS = (1 / 3, 1 / 2, 1.0, 2.0, 3.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--subjects", type=int, default=20)
    ap.add_argument("--kind", choices=("vae", "bvae", "cvae", "bcvae"),
                    default="bcvae")
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--betas", type=float, nargs="*", default=list(BETAS))
    ap.add_argument("--out", help="write the sweep log as JSON")
    args = ap.parse_args()

    dataset = experiment.generate_dataset(args.seed, n_subjects=args.subjects)
    splits = experiment.prepare_splits(dataset, "interp", "subject", args.seed)

    rows = []
    print(f"{'beta':>8}{'auc':>10}{'accuracy':>10}{'threshold':>12}")
    for beta in args.betas:
        _, rep = experiment.run_manifold(splits, kind=args.kind, beta=beta,
                                         epochs=args.epochs, seed=args.seed)
        rows.append({"beta": beta, "auc": rep["auc"],
                     "accuracy": rep["accuracy"], "threshold": rep["threshold"]})
        print(f"{beta:>8.3f}{rep['auc']:>10.4f}{rep['accuracy']:>10.4f}"
              f"{rep['threshold']:>12.4g}")

    if args.out:
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(rows, f, indent=1)


if __name__ == "__main__":
    main()

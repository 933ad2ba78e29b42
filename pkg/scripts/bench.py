"""Scaling of the spectral operator stack vs dense graph shifts; writes a CSV of (path, n, seconds)."""
import argparse
import csv

from fouriergnn.evaluation import bench_scaling


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--out", default="bench.csv")
    args = ap.parse_args()
    report = bench_scaling(repeats=args.repeats)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "n", "mean_seconds", "std_seconds"])
        w.writerows(report.rows())
    for path, n, mean, std in report.rows():
        print(f"{path:8s} n={n:5d}  {mean * 1e3:8.2f} ms  +- {std * 1e3:.2f}")
    print(f"log-log slope: spectral {report.spectral_slope:.3f}, dense {report.dense_slope:.3f}")


if __name__ == "__main__":
    main()

"""Spectral recursion vs dense multi-order convolution over the full grid."""
import time

from fouriergnn.oracle import equivalence_grid


def main():
    t0 = time.perf_counter()
    rows = equivalence_grid()
    worst = max(rows, key=lambda r: r["max_abs_error"])
    failed = [r for r in rows if not r["passed"]]
    print(f"{len(rows)} points in {time.perf_counter() - t0:.2f}s; worst error {worst['max_abs_error']:.2e} "
          f"at n={worst['n']} d={worst['d']} K={worst['K']} seed={worst['seed']}")
    for r in failed:
        print("FAIL", r)
    raise SystemExit(1 if failed else 0)


if __name__ == "__main__":
    main()

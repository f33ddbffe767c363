"""Observed time orders 2r of Richardson extrapolation on the free packet.

With a fine mesh the spatial error is negligible, so halving the time
step divides the error by about 4, 16, 64 and 256 for r = 1..4.

Run: python3 demos/richardson_orders.py
"""

from tdse_dtbc import error_study, preset, ratio_table


def main():
    p = preset("ex1")
    Ms = [96, 192, 384, 768]
    cells = [(90, M, r) for M in Ms for r in (1, 2, 3, 4)]
    out = error_study(p, 9, cells)
    print("max L2h error over [0, T], ex1, n=9, J=90")
    for r in (1, 2, 3, 4):
        errs = [out[(90, M, r)].max("l2") for M in Ms]
        ratios = ratio_table(errs)
        print(f"r={r}: " + "  ".join(f"M={M}: {e:.2e}" for M, e in zip(Ms, errs)))
        print("      ratios " + "  ".join(f"{q:7.1f}" for q in ratios) + f"   (theory {4**r})")


if __name__ == "__main__":
    main()

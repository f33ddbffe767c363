"""Boundary kernels from the exterior symbol by inverse Z-transform.

Shows the kernel decay, the sampling radius, the stored error estimate
and the round-trip check for the right boundary of ex1 and ex2.

Run: python3 demos/kernel_synthesis.py
"""

import numpy as np

from tdse_dtbc import boundary_kernel, kernel_from_symbol, preset


def main():
    k = kernel_from_symbol(lambda z: 1.0 / (1.0 - 0.5 / z), 512)
    print(f"geometric symbol: max |K^l - 2^-l| = {np.max(np.abs(k.coeffs - 0.5 ** np.arange(513))):.1e}")
    for name, n, J, M in (("ex1", 9, 90, 1200), ("ex2", 9, 60, 2304)):
        cfg = preset(name).scheme(n, J, M)
        kern = boundary_kernel(cfg.exterior("right"), M)
        c = np.abs(kern.boundary_coeffs)
        print(f"{name}: M={M}, N={kern.n_samples}, radius={kern.radius:.6f}, "
              f"estimate={kern.max_error_estimate:.1e}, round trip={kern.round_trip_residual():.1e}")
        print("   |K^l| at l = " + ", ".join(f"{l}: {c[l]:.2e}" for l in (0, 1, 10, 100, M)))


if __name__ == "__main__":
    main()

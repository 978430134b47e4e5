"""Jump functional and band measure of sin(pi x1) sin(pi x2) against their closed forms."""
import time

import numpy as np

from qlocp import geometry as geo


def main():
    field = geo.sinsin()
    print(f"{'tbar':>5} {'estimate':>10} {'exact':>10} {'rel err':>9} {'sec':>5}")
    for t in (0.0, 0.3, 0.5, 0.8, 1.0):
        t0 = time.perf_counter()
        est = geo.estimate_sigma(field, t, 1.0)
        ex = geo.sigma_sinsin_exact(t)
        rel = abs(est.limit - ex) / ex if ex else abs(est.limit)
        print(f"{t:5.2f} {est.limit:10.6f} {ex:10.6f} {rel:9.2e} {time.perf_counter() - t0:5.1f}")
    print("\nsigma_r at the peak level (decays like sqrt(r)):")
    for r in (1e-2, 1e-3, 1e-4):
        print(f"  r={r:.0e}  sigma_r={geo.sigma_r(field, 1.0, r, 1.0):.6f}")
    print("\nband measure at the peak level, ratio to r (bound 8/pi^2 = %.5f):" % (8 / np.pi ** 2))
    for r in (1e-2, 1e-3, 1e-4):
        print(f"  r={r:.0e}  meas/r={geo.band_measure(field, 1.0, r) / r:.6f}")


if __name__ == "__main__":
    main()

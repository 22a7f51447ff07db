"""Second-order channel: projection search against an exhaustive direction sweep and n-block values.

    python scripts/second_order_search.py [--p 0.3 0.1 --q -0.2 0.05 --power 1]
"""
import argparse
import math
import time
from dataclasses import dataclass, field

import numpy as np

from gfcap.fbcap import SearchOptions, armak_capacity
from gfcap.nblock import nblock_feedback
from gfcap.riccati import dare_stabilizing
from gfcap.spectra import RationalSpectrum, to_state_space, toeplitz_covariance
from gfcap.waterfill import spectral_waterfill


@dataclass
class SearchConfig:
    p: list = field(default_factory=lambda: [0.3, 0.1])
    q: list = field(default_factory=lambda: [-0.2, 0.05])
    power: float = 1.0
    starts: int = 16
    angles: int = 720
    block_lengths: tuple = (4, 8, 16, 32)


def direction_sweep(spec, P, angles):
    """Best rate over directions on the power boundary, found by bisection along each ray."""
    ss = to_state_space(spec)
    Pn = P / spec.innovation_variance
    best = -math.inf
    for phi in np.linspace(0, 2 * np.pi, angles, endpoint=False):
        u = np.array([[math.cos(phi), math.sin(phi)]])
        lo, hi, found = 0.0, 50.0, None
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            try:
                sol = dare_stabilizing(ss.F, ss.G, mid * u + ss.H, max_iter=20000)
            except (ValueError, RuntimeError):
                hi = mid
                continue
            if (mid * u @ sol.sigma_plus @ (mid * u).T).item() > Pn:
                hi = mid
            else:
                lo, found = mid, sol
        if found is not None:
            best = max(best, 0.5 * math.log(found.innovation_variance))
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--p", type=float, nargs=2, default=[0.3, 0.1])
    ap.add_argument("--q", type=float, nargs=2, default=[-0.2, 0.05])
    ap.add_argument("--power", type=float, default=1.0)
    ap.add_argument("--starts", type=int, default=16)
    ap.add_argument("--angles", type=int, default=720)
    cfg = SearchConfig(**vars(ap.parse_args()))
    spec = RationalSpectrum(tuple(cfg.p), tuple(cfg.q))
    t0 = time.perf_counter()
    d = armak_capacity(spec, cfg.power, SearchOptions(starts=cfg.starts))
    print(f"search:      C_FB = {d.rate:.10f} nats, X = {np.ravel(d.x_direction)}, {time.perf_counter() - t0:.1f}s")
    t0 = time.perf_counter()
    print(f"sweep:       best = {direction_sweep(spec, cfg.power, cfg.angles):.10f} ({time.perf_counter() - t0:.1f}s)")
    print(f"nonfeedback: C    = {spectral_waterfill(spec, cfg.power).capacity:.10f}")
    for n in cfg.block_lengths:
        print(f"n-block:     C_{n:<3d} = {nblock_feedback(toeplitz_covariance(spec, n), cfg.power).value:.10f}")


if __name__ == "__main__":
    main()

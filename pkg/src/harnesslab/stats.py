"""Small statistics helpers shared by the engine and sweep layers."""

from __future__ import annotations

import math


def wilson_interval(successes: int, n: int, z: float) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Behaves sensibly at the boundaries: (0, n) pins the lower bound to 0
    and (n, n) pins the upper bound to 1.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0 <= successes <= n:
        raise ValueError(f"successes {successes} out of range [0, {n}]")
    if not z > 0:
        raise ValueError(f"z must be positive, got {z}")
    p_hat = successes / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p_hat + z2 / (2 * n)) / denom
    margin = (z / denom) * math.sqrt(p_hat * (1 - p_hat) / n + z2 / (4 * n * n))
    low = 0.0 if successes == 0 else max(0.0, center - margin)
    high = 1.0 if successes == n else min(1.0, center + margin)
    return low, high

"""Monte-Carlo check that a generator's output repeats its statistics with a claimed period.

Three independent groups of realizations are drawn: the probe rect, the
probe shifted by one period, and the probe shifted by a non-period offset.
For every pixel and channel the groups are compared on mean, variance and
the lag-1 covariances to the right and below (pairs inside the probe) using
two-sample z statistics. Moment equality is a necessary condition for
equality in distribution, not a sufficient one.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import Rect
from ..errors import ParameterError
from ..latent import hash_words
from ..netspec import NetworkSpec
from ..network import Params, bind, generate_batch

MIN_SAMPLES = 10_000
Z_THRESHOLD = 4.0
CHUNK = 1000
# Seed streams for the three groups live on their own hash sites.
_SEED_SITE = 1 << 41


def _psum(x: np.ndarray) -> np.ndarray:
    """Sum over the leading (sample) axis with numpy's pairwise reduction."""
    return np.ascontiguousarray(np.moveaxis(x, 0, -1)).sum(axis=-1)


def group_seeds(seed: int, group: int, n: int) -> np.ndarray:
    return hash_words(np.uint64(seed), _SEED_SITE + group, np.arange(n, dtype=np.int64), 0, 0, 0)


def _draw(net, params, seeds: np.ndarray, rect: Rect) -> np.ndarray:
    parts = [generate_batch(net, params, seeds[s : s + CHUNK], rect) for s in range(0, len(seeds), CHUNK)]
    return np.concatenate(parts)


def _statistics(x: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-statistic (estimate, variance of the estimate) arrays."""
    n = x.shape[0]
    mean = _psum(x) / n

    def summarize(g: np.ndarray):
        m = _psum(g) / n
        v = _psum((g - m) ** 2) / (n - 1)
        return m, v / n

    c = x - mean
    out = {"mean": summarize(x), "variance": summarize(c * c)}
    if x.shape[2] > 1:
        out["cov_right"] = summarize(c[:, :, :-1] * c[:, :, 1:])
    if x.shape[1] > 1:
        out["cov_down"] = summarize(c[:, :-1] * c[:, 1:])
    return out


def _z_scores(a, b) -> dict[str, np.ndarray]:
    out = {}
    for name in a:
        ma, va = a[name]
        mb, vb = b[name]
        se = np.sqrt(va + vb)
        out[name] = np.where(se > 0, (ma - mb) / np.where(se > 0, se, 1.0), 0.0)
    return out


def _phase_tables(stats, rect: Rect, period: tuple[int, int]) -> dict[str, dict[str, float]]:
    tables: dict[str, dict[str, list]] = {}
    for name, (est, _) in stats.items():
        for (i, j), value in np.ndenumerate(est.mean(axis=-1)):
            key = f"{(rect.row_start + i) % period[0]},{(rect.col_start + j) % period[1]}"
            tables.setdefault(key, {}).setdefault(name, []).append(float(value))
    return {k: {n: float(np.mean(v)) for n, v in sorted(d.items())} for k, d in sorted(tables.items())}


@dataclass
class StationarityReport:
    period_tested: tuple[int, int]
    num_samples: int
    probe_rect: str
    detect_shift: tuple[int, int]
    num_statistics: int
    threshold: float
    family_wise_bound: float
    max_z_score_period_shift: float
    max_z_score_detect: float
    detection_triggered: bool
    verdict: str
    worst_period_statistic: str
    worst_detect_statistic: str
    phase_moments: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _worst(z: dict[str, np.ndarray]) -> tuple[float, str]:
    best, label = 0.0, ""
    for name, arr in z.items():
        idx = np.unravel_index(np.argmax(np.abs(arr)), arr.shape)
        val = float(abs(arr[idx]))
        if val > best:
            best, label = val, f"{name}@{tuple(int(i) for i in idx)}"
    return best, label


def test_cyclostationarity(
    net: NetworkSpec,
    weights: Params,
    claimed_period: tuple[int, int],
    probe_rect: Rect,
    num_samples: int,
    *,
    seed: int = 0,
    detect_shift: tuple[int, int] = (1, 0),
    threshold: float = Z_THRESHOLD,
) -> StationarityReport:
    """Compare probe statistics against a one-period shift and a detection shift."""
    if num_samples < MIN_SAMPLES:
        raise ParameterError(f"need at least {MIN_SAMPLES} samples, got {num_samples}")
    if claimed_period[0] < 1 or claimed_period[1] < 1:
        raise ParameterError(f"period must be positive, got {claimed_period}")
    params = bind(net, weights)
    shifted = probe_rect.shift(*claimed_period)
    detect = probe_rect.shift(*detect_shift)
    base = _statistics(_draw(net, params, group_seeds(seed, 0, num_samples), probe_rect))
    period_stats = _statistics(_draw(net, params, group_seeds(seed, 1, num_samples), shifted))
    detect_stats = _statistics(_draw(net, params, group_seeds(seed, 2, num_samples), detect))
    z_period = _z_scores(base, period_stats)
    z_detect = _z_scores(base, detect_stats)
    count = sum(arr.size for arr in z_period.values())
    p_single = math.erfc(threshold / math.sqrt(2.0))
    max_period, where_period = _worst(z_period)
    max_detect, where_detect = _worst(z_detect)
    return StationarityReport(
        period_tested=tuple(claimed_period),
        num_samples=num_samples,
        probe_rect=str(probe_rect),
        detect_shift=tuple(detect_shift),
        num_statistics=count,
        threshold=threshold,
        family_wise_bound=min(1.0, count * p_single),
        max_z_score_period_shift=max_period,
        max_z_score_detect=max_detect,
        detection_triggered=max_detect > threshold,
        verdict="consistent_with_period" if max_period < threshold else "violation",
        worst_period_statistic=where_period,
        worst_detect_statistic=where_detect,
        phase_moments=_phase_tables(base, probe_rect, claimed_period),
    )


test_cyclostationarity.__test__ = False

"""Wasted work of crop-and-stitch generation with zero-padded generators."""

from __future__ import annotations

from fractions import Fraction

from ..errors import ParameterError
from ..geometry import min_latent_overlap


def patch_latent_side(S: int, K: int) -> int:
    """Latent side ``N = floor(S / 2^K)`` of an ``S``-pixel patch."""
    if S < 1 or K < 0:
        raise ParameterError(f"need S >= 1 and K >= 0, got S={S}, K={K}")
    return S // 2**K


def redundancy_fraction_exact(S: int, K: int) -> Fraction:
    """``4 (1/N - 1/N^2)`` as an exact rational."""
    n = patch_latent_side(S, K)
    if n < 3:
        raise ParameterError(f"floor(S / 2^K) must be at least 3 (got {n} for S={S}, K={K})")
    return 4 * (Fraction(1, n) - Fraction(1, n * n))


def redundancy_fraction(S: int, K: int) -> float:
    return float(redundancy_fraction_exact(S, K))


def finite_discard_fraction(N: int, K: int, M: int) -> Fraction:
    """Exact discarded share of an ``M x M`` crop tiling that covers its own clean union.

    Along one axis the first window keeps its whole clean interior
    ``2^K N - 2 (2^K - 1)`` and each later window adds ``2^K (N - overlap)``.
    """
    if M < 1 or K < 1:
        raise ParameterError("need M >= 1 and K >= 1")
    s = 2**K
    border = s - 1
    ov = min_latent_overlap(K)
    kept = s * N - 2 * border + (M - 1) * s * (N - ov)
    return 1 - Fraction(kept * kept, (M * s * N) ** 2)


def crop_target_side(N: int, K: int, M: int) -> tuple[int, int]:
    """Start and end of the clean union of ``M`` windows starting at latent 0."""
    s = 2**K
    border = s - 1
    ov = min_latent_overlap(K)
    return border, s * ((M - 1) * (N - ov) + N) - border


def redundancy_table(S_values, K_values) -> list[dict]:
    rows = []
    for S in S_values:
        for K in K_values:
            n = patch_latent_side(S, K)
            row = {"S": S, "K": K, "N": n}
            if n >= 3:
                exact = redundancy_fraction_exact(S, K)
                row.update(fraction=float(exact), exact=str(exact))
            else:
                row.update(fraction=None, exact=None)
            rows.append(row)
    return rows

"""Randomized sub-patch versus direct generation trials, with culprit localization."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..core import Rect, max_abs_diff, subpatch
from ..errors import ParameterError
from ..geometry import min_input_size
from ..layers import LayerKind, LayerSpec
from ..netspec import NetworkSpec
from ..network import bind, forward, latent_for
from ..weights import init_random

MAX_LATENT_SIDE = 8


@dataclass
class TrialResult:
    trial: int
    seed: int
    weight_seed: int
    big_latent: str
    sub_latent: str
    max_abs_diff: float
    first_bad_layer: str | None


@dataclass
class ConsistencyReport:
    network: str
    trials: int
    failures: int
    passed: bool
    culprit_layers: list[str]
    failing_trials: list[TrialResult] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def with_zero_padding(net: NetworkSpec, layer_name: str | None = None) -> NetworkSpec:
    """Swap one no-padding conv (the first with a kernel above 1 by default) for a zero-padded one."""
    candidates = [l for l in net.all_layers if l.kind is LayerKind.CONV_NO_PAD and l.kernel > 1]
    if layer_name is not None:
        candidates = [l for l in candidates if l.name == layer_name]
    if not candidates:
        raise ParameterError(f"{net.name} has no no-padding convolution named {layer_name!r}")
    old = candidates[0]
    return net.replace_layer(old.name, LayerSpec.conv(old.name, old.in_channels, old.out_channels, old.kernel, zero_pad=True))


def _random_rect(rng: np.random.Generator, lo: int, hi: int) -> Rect:
    """Random rect with sides in ``[lo, hi]``, never ``lo x lo`` so a strict sub-rect exists."""
    while True:
        h, w = (int(v) for v in rng.integers(lo, hi + 1, size=2))
        if h > lo or w > lo:
            break
    r0, c0 = (int(v) for v in rng.integers(-40, 41, size=2))
    return Rect.of_size(h, w, r0, c0)


def _sub_rect(rng: np.random.Generator, outer: Rect, lo: int) -> Rect:
    while True:
        h = int(rng.integers(lo, outer.height() + 1))
        w = int(rng.integers(lo, outer.width() + 1))
        r0 = outer.row_start + int(rng.integers(0, outer.height() - h + 1))
        c0 = outer.col_start + int(rng.integers(0, outer.width() - w + 1))
        r = Rect.of_size(h, w, r0, c0)
        if r != outer:
            return r


def _output(res):
    return res.image if res.image is not None else res.features


def _first_bad_layer(big, small) -> str | None:
    for (name, a), (_, b) in zip(big.intermediates, small.intermediates):
        if not a.anchor.contains(b.anchor):
            return name
        if max_abs_diff(subpatch(a, b.anchor), b) != 0.0:
            return name
    return None


def run_trial(net: NetworkSpec, trial: int, rng: np.random.Generator, max_side: int = MAX_LATENT_SIDE) -> TrialResult:
    lo = min_input_size(net)
    if lo >= max_side:
        raise ParameterError(f"{net.name} needs latent side {lo}, leaving no strict sub-rect within {max_side}")
    outer = _random_rect(rng, lo, max_side)
    inner = _sub_rect(rng, outer, lo)
    seed = int(rng.integers(0, 2**63))
    weight_seed = int(rng.integers(0, 2**63))
    params = bind(net, init_random(net, weight_seed))
    big = forward(net, params, latent_for(net, seed, outer), seed, capture=True)
    small = forward(net, params, latent_for(net, seed, inner), seed, capture=True)
    big_out, small_out = _output(big), _output(small)
    if not big_out.anchor.contains(small_out.anchor):
        diff = float("inf")
    else:
        diff = max_abs_diff(subpatch(big_out, small_out.anchor), small_out)
    culprit = _first_bad_layer(big, small) if diff != 0.0 else None
    return TrialResult(trial, seed, weight_seed, str(outer), str(inner), diff, culprit)


def verify_consistency(net: NetworkSpec, trials: int = 100, seed: int = 0, max_side: int = MAX_LATENT_SIDE) -> ConsistencyReport:
    """Random weights, latent rect ``J`` and strict sub-rect ``J'`` per trial; compare bitwise."""
    if trials < 1:
        raise ParameterError("need at least one trial")
    rng = np.random.default_rng(seed)
    failing = []
    for t in range(trials):
        res = run_trial(net, t, rng, max_side)
        if res.max_abs_diff != 0.0:
            failing.append(res)
    culprits = sorted({r.first_bad_layer for r in failing if r.first_bad_layer})
    return ConsistencyReport(net.name, trials, len(failing), not failing, culprits, failing)

"""Command-line entry point.

Exit codes: 0 success, 1 property failure, 2 bad input, 3 geometry
infeasible, 4 seam mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from . import pngio
from .analysis import (
    finite_discard_fraction,
    overlap_witness,
    redundancy_fraction_exact,
    redundancy_table,
    test_cyclostationarity,
    trace_taint,
    verify_backward_rect,
    verify_consistency,
    with_zero_padding,
)
from .analysis.taint import MAX_SUPPORT_PIXELS
from .core import Rect
from .errors import (
    ContainmentError,
    InfCanvasError,
    ParameterError,
    PlanningError,
    UnderflowError,
    WeightFileError,
)
from .geometry import backward_rect, forward_rect, layer_rects, min_input_size, summarize
from .netspec import NetworkSpec, load_spec
from .network import BUILTIN, builtin, crop_stitch_net, generate
from .tiling import CONSISTENT, CROP, BandStream, generate_tiled, plan
from .weights import init_random, load

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_GEOMETRY, EXIT_SEAM = 0, 1, 2, 3, 4


class InputError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError(f"sizes must be positive, got {text!r}")
    return h, w


def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two comma-separated integers, got {text!r}") from None
    return a, b


def _int_range(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _load_net(name: str) -> NetworkSpec:
    if name in BUILTIN:
        return builtin(name)
    if not Path(name).exists():
        raise InputError(f"{name!r} is neither a built-in network ({', '.join(sorted(BUILTIN))}) nor a spec file")
    return load_spec(name)


def _weights(net: NetworkSpec, args):
    if getattr(args, "weights", None):
        return load(args.weights, net)
    if getattr(args, "random_init", False) or not any(layer.param_shapes() for layer in net.all_layers):
        return init_random(net, args.weight_seed if args.weight_seed is not None else args.seed)
    raise InputError("give --weights FILE or --random-init")


def _jsonable(obj):
    if isinstance(obj, Rect):
        return str(obj)
    if is_dataclass(obj):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _write_report(path: str | None, doc: dict) -> None:
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def _summary_lines(net: NetworkSpec) -> list[str]:
    try:
        s = summarize(net)
    except InfCanvasError as exc:
        return [f"geometry: {exc}"]
    return [
        f"upsampling layers: {s.upsample_count}",
        f"model patch: {s.model_patch[0]}x{s.model_patch[1]}",
        f"stationarity period: {s.stationarity_period[0]}x{s.stationarity_period[1]}",
        f"receptive margin (before, after): {s.receptive_margin}",
        f"minimal latent: {s.min_input[0]}x{s.min_input[1]}",
    ]


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    net = _load_net(args.net)
    weights = _weights(net, args)
    h, w = args.latent
    r0, c0 = args.latent_origin
    latent = Rect.of_size(h, w, r0, c0)
    result = generate(net, weights, args.seed, latent_rect=latent)
    out = result.image if result.image is not None else result.features
    image_rect = out.anchor
    pngio.write_image(args.output, out.data)
    print(f"image rect: {image_rect} ({image_rect.height()}x{image_rect.width()})")
    for line in _summary_lines(net):
        print(line)
    if args.report:
        _write_report(args.report, {"image_rect": image_rect, "latent_rect": latent, "network": net.name})
    return EXIT_OK


def _order(args, count: int) -> list[int] | None:
    if args.order == "sorted":
        return None
    if args.order == "reverse":
        return list(range(count))[::-1]
    seed = args.order_seed if args.order_seed is not None else args.seed
    return [int(i) for i in np.random.default_rng(seed).permutation(count)]


def cmd_tile(args) -> int:
    if args.mode == "inconsistent-crop":
        net = crop_stitch_net(args.blocks)
        weights = init_random(net, args.weight_seed if args.weight_seed is not None else args.seed)
        mode = CROP
    else:
        net = _load_net(args.net)
        weights = _weights(net, args)
        mode = CONSISTENT
    target = Rect.of_size(args.height, args.width, args.origin[0], args.origin[1])
    tiling = plan(net, target, args.budget, mode)
    order = _order(args, len(tiling.tiles))
    if mode == CONSISTENT and not args.in_memory:
        stream = BandStream(net, weights, tiling, args.seed, order, args.threads, args.verify_seams)
        pngio.write_bands(args.output, target.width(), target.height(), net.output_channels, stream)
        report = stream.report
    else:
        res = generate_tiled(net, weights, tiling, args.seed, order, threads=args.threads, verify_seams=args.verify_seams)
        pngio.write_image(args.output, res.image.data)
        report = res.report
    doc = {"target": target, "tile_budget": args.budget, "tiles": len(tiling.tiles), "report": report.to_dict()}
    _write_report(args.report, doc)
    if args.report:
        print(f"{len(tiling.tiles)} tiles, discard fraction {report.discard_fraction}")
    if (args.verify_seams or mode == CROP) and report.seam_max_abs_diff != 0.0:
        print(f"seam mismatch: max abs diff {report.seam_max_abs_diff}", file=sys.stderr)
        return EXIT_SEAM
    return EXIT_OK


def _verify_consistency(args) -> tuple[bool, dict]:
    net = _load_net(args.net)
    if args.zero_pad:
        net = with_zero_padding(net, None if args.zero_pad == "first" else args.zero_pad)
    rep = verify_consistency(net, args.trials, args.seed)
    if not rep.passed:
        first = rep.failing_trials[0]
        print(
            f"FAIL marginalization consistency: {rep.failures}/{rep.trials} trials differ; "
            f"offending layer(s): {', '.join(rep.culprit_layers) or 'unknown'}; "
            f"reproduce with --seed {args.seed} (trial {first.trial}, latent {first.big_latent} vs {first.sub_latent})"
        )
    else:
        print(f"PASS marginalization consistency: {rep.trials} trials bitwise equal")
    return rep.passed, rep.to_dict()


def _verify_stationarity(args) -> tuple[bool, dict]:
    net = _load_net(args.net)
    weights = _weights(net, args)
    period = args.period or summarize(net).stationarity_period
    ph, pw = args.probe
    rep = test_cyclostationarity(
        net, weights, period, Rect.of_size(ph, pw), args.samples, seed=args.seed, detect_shift=args.detect_shift
    )
    ok = rep.verdict == "consistent_with_period"
    print(
        f"{'PASS' if ok else 'FAIL'} period {period[0]}x{period[1]}: max |z| {rep.max_z_score_period_shift:.3f} "
        f"(threshold {rep.threshold}); detection shift {rep.detect_shift} max |z| {rep.max_z_score_detect:.3f}"
        + ("" if ok else f"; reproduce with --seed {args.seed}")
    )
    return ok, rep.to_dict()


def _verify_geometry(args) -> tuple[bool, dict]:
    net = _load_net(args.net)
    rng = np.random.default_rng(args.seed)
    n_min = min_input_size(net)
    failures = []
    image = forward_rect(net, Rect.square(0, n_min + 1))
    for t in range(args.trials):
        h, w = (int(v) for v in rng.integers(1, min(image.height(), 12) + 1, size=2))
        r0 = image.row_start + int(rng.integers(0, image.height() - h + 1))
        c0 = image.col_start + int(rng.integers(0, image.width() - w + 1))
        out = Rect.of_size(h, w, r0, c0)
        back = backward_rect(net, out)
        if not forward_rect(net, back).contains(out):
            failures.append(f"trial {t}: forward(backward({out})) does not cover it")
        elif back.expand(1).area() <= MAX_SUPPORT_PIXELS and not verify_backward_rect(net, out):
            failures.append(f"trial {t}: traced support of {out} differs from {back}")
    shapes = [str(r.shape) for r in layer_rects(net, Rect.square(0, n_min))]
    ok = not failures
    print(f"{'PASS' if ok else 'FAIL'} geometry: {args.trials} random rects" + ("" if ok else f"; {failures[0]}; seed {args.seed}"))
    return ok, {"failures": failures, "min_input": n_min, "layer_shapes_from_min_input": shapes}


def _verify_redundancy(args) -> tuple[bool, dict]:
    exact = redundancy_fraction_exact(args.budget, args.blocks)
    print(float(exact))
    return True, {"S": args.budget, "K": args.blocks, "fraction": float(exact), "exact": str(exact)}


def cmd_verify(args) -> int:
    suites = {
        "consistency": _verify_consistency,
        "stationarity": _verify_stationarity,
        "geometry": _verify_geometry,
        "redundancy": _verify_redundancy,
    }
    ok, doc = suites[args.suite](args)
    if args.report:
        _write_report(args.report, {"suite": args.suite, "passed": ok, "seed": args.seed, "details": doc})
    return EXIT_OK if ok else EXIT_FAIL


def cmd_analyze(args) -> int:
    if args.analysis == "redundancy":
        rows = redundancy_table(args.budgets, args.blocks_range)
        for row in rows:
            frac = "n/a (N < 3)" if row["fraction"] is None else f"{row['fraction']:.10f} ({row['exact']})"
            print(f"S={row['S']} K={row['K']} N={row['N']} fraction={frac}")
        doc = {"rows": rows}
        if args.tiles:
            doc["finite"] = [
                {"K": k, "N": row["N"], "M": args.tiles, "fraction": str(finite_discard_fraction(row["N"], k, args.tiles))}
                for row in rows
                for k in [row["K"]]
                if row["N"] >= 3 and k >= 1
            ]
        if args.report:
            _write_report(args.report, doc)
        return EXIT_OK
    if args.analysis == "taint":
        net = crop_stitch_net(args.blocks, width=1)
        h, w = args.latent
        trace = trace_taint(net, Rect.of_size(h, w))
        width = trace.border_width()
        print(f"output {trace.anchor.height()}x{trace.anchor.width()}, tainted border width {width}")
        if args.output:
            pngio.write_mask(args.output, trace.padding)
        doc = {"output_rect": trace.anchor, "border_width": width, "clean_rect": trace.clean_rect()}
        if args.overlap is not None:
            wit = overlap_witness(args.blocks, max(h, w), args.overlap)
            doc["overlap_witness"] = {"overlap": args.overlap, "gap": wit.gap, "adjacent": wit.adjacent}
            print(f"overlap {args.overlap}: gap {wit.gap} ({'adjacent' if wit.adjacent else 'gap'})")
        if args.report:
            _write_report(args.report, doc)
        return EXIT_OK
    ok, doc = _verify_stationarity(args)
    _write_report(args.report, doc)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser, net_default: str = "g0") -> None:
    p.add_argument("--net", default=net_default, help=f"built-in ({', '.join(sorted(BUILTIN))}) or spec file path")
    p.add_argument("--weights", help=".igw weight file")
    p.add_argument("--random-init", action="store_true", help="draw weights from --weight-seed (default --seed)")
    p.add_argument("--weight-seed", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", help="write a JSON report here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="infcanvas", description="Consistent generation of unbounded images.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="one-shot generation from a latent rect")
    _common(g)
    g.add_argument("--latent", type=_size, default=(6, 6), help="latent size HxW")
    g.add_argument("--latent-origin", type=_pair, default=(0, 0))
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("tile", help="tiled generation of a large image")
    _common(t)
    t.add_argument("--width", type=int, required=True)
    t.add_argument("--height", type=int, required=True)
    t.add_argument("--origin", type=_pair, default=(0, 0))
    t.add_argument("--budget", type=int, default=64)
    t.add_argument("--mode", choices=("consistent", "inconsistent-crop"), default="consistent")
    t.add_argument("--blocks", type=int, default=3, help="upsampling blocks of the padded network (crop mode)")
    t.add_argument("--order", choices=("sorted", "shuffled", "reverse"), default="sorted")
    t.add_argument("--order-seed", type=int)
    t.add_argument("--threads", type=int, help="worker threads (default INFCANVAS_THREADS or CPU count)")
    t.add_argument("--verify-seams", action="store_true")
    t.add_argument("--in-memory", action="store_true", help="stitch in memory instead of streaming row bands")
    t.add_argument("-o", "--output", required=True)
    t.set_defaults(func=cmd_tile)

    v = sub.add_parser("verify", help="run a property suite")
    v.add_argument("suite", choices=("consistency", "stationarity", "geometry", "redundancy"))
    _common(v)
    v.add_argument("--trials", type=int, default=100)
    v.add_argument("--zero-pad", metavar="LAYER", help="swap this conv (or 'first') for a zero-padded one")
    v.add_argument("--period", type=_size)
    v.add_argument("--probe", type=_size, default=(4, 4))
    v.add_argument("--samples", type=int, default=10_000)
    v.add_argument("--detect-shift", type=_pair, default=(1, 0))
    v.add_argument("--budget", type=int, default=4096)
    v.add_argument("--blocks", type=int, default=9)
    v.set_defaults(func=cmd_verify)

    a = sub.add_parser("analyze", help="emit analysis tables, taint maps or statistics reports")
    a.add_argument("analysis", choices=("redundancy", "taint", "stationarity"))
    _common(a, net_default="bilinear")
    a.add_argument("--budgets", type=_int_range, default=[4096])
    a.add_argument("--blocks-range", type=_int_range, default=list(range(6, 11)))
    a.add_argument("--tiles", type=int, help="also report the exact M x M tiling fraction")
    a.add_argument("--blocks", type=int, default=2)
    a.add_argument("--latent", type=_size, default=(4, 4))
    a.add_argument("--overlap", type=int)
    a.add_argument("--period", type=_size)
    a.add_argument("--probe", type=_size, default=(4, 4))
    a.add_argument("--samples", type=int, default=10_000)
    a.add_argument("--detect-shift", type=_pair, default=(1, 0))
    a.add_argument("-o", "--output")
    a.set_defaults(func=cmd_analyze)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (UnderflowError, PlanningError, ContainmentError) as exc:
        print(f"error: geometry infeasible: {exc}", file=sys.stderr)
        return EXIT_GEOMETRY
    except (InputError, WeightFileError, ParameterError, InfCanvasError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from infcanvas.analysis import crop_target_side, finite_discard_fraction, redundancy_fraction_exact
from infcanvas.core import Rect, subpatch
from infcanvas.errors import ContractError, PlanningError
from infcanvas.geometry import backward_rect
from infcanvas.network import bind, crop_stitch_net, generate, reference_g0
from infcanvas.tiling import CONSISTENT, CROP, BandStream, crop_geometry, generate_tiled, plan
from infcanvas.weights import init_random


@pytest.fixture(scope="module")
def narrow():
    net = reference_g0(16, 8)
    return net, bind(net, init_random(net, 21))


@pytest.fixture(scope="module")
def crop3():
    net = crop_stitch_net(3, width=4)
    return net, bind(net, init_random(net, 5))


# planning --------------------------------------------------------------------


def test_plan_four_quadrants(g0):
    p = plan(g0, Rect.square(0, 128), 64)
    assert p.mode == CONSISTENT
    assert p.grid_shape == (2, 2)
    assert [t.image_rect for t in p.tiles] == [
        Rect(0, 64, 0, 64),
        Rect(0, 64, 64, 128),
        Rect(64, 128, 0, 64),
        Rect(64, 128, 64, 128),
    ]
    for t in p.tiles:
        assert t.latent_rect.shape == (6, 6)
        assert t.latent_rect == backward_rect(g0, t.image_rect)
    assert p.tiles[0].latent_rect.intersect(p.tiles[1].latent_rect) == Rect(0, 6, 2, 6)


def test_plan_single_tile(g0):
    target = Rect(10, 50, -7, 20)
    p = plan(g0, target, 64)
    assert len(p.tiles) == 1
    assert p.tiles[0].latent_rect == backward_rect(g0, target)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.integers(1, 300), st.integers(-100, 100), st.integers(-100, 100), st.integers(32, 100))
def test_consistent_tiles_partition_target(h, w, r, c, budget):
    target = Rect.of_size(h, w, r, c)
    p = plan(reference_g0(), target, budget)
    covered = np.zeros(target.shape, dtype=int)
    for t in p.tiles:
        assert t.image_rect.height() <= budget and t.image_rect.width() <= budget
        assert t.emit_rect == t.image_rect
        rows, cols = t.image_rect.slices(target)
        covered[rows, cols] += 1
    assert np.all(covered == 1)


def test_plan_errors(g0):
    with pytest.raises(PlanningError):
        plan(g0, Rect.square(0, 64), 31)
    with pytest.raises(PlanningError):
        plan(crop_stitch_net(2), Rect.square(0, 64), 64)
    with pytest.raises(PlanningError):
        plan(g0, Rect.square(0, 64), 64, "overlap_blend")
    with pytest.raises(PlanningError):
        plan(g0, Rect.square(0, 64), 64, CROP)
    with pytest.raises(PlanningError):
        plan(crop_stitch_net(3), Rect.square(0, 64), 16, CROP)


def test_crop_plan_interior_tile_discards_sixteen(crop3):
    net, _ = crop3
    assert crop_geometry(net) == (3, 7)
    p = plan(net, Rect.square(0, 192), 64, CROP)
    assert p.grid_shape == (4, 4)
    interior = [t for t in p.tiles if p.is_interior(t)]
    assert len(interior) == 4
    for t in interior:
        assert t.latent_rect.shape == (8, 8)
        assert t.image_rect.shape == (64, 64)
        assert t.emit_rect.shape == (48, 48)
    # emitted rects partition the target
    covered = np.zeros((192, 192), dtype=int)
    for t in p.tiles:
        rows, cols = t.emit_rect.slices(p.target)
        covered[rows, cols] += 1
    assert np.all(covered == 1)


# consistent generation ---------------------------------------------------------


def test_tiled_equals_one_shot(narrow):
    net, params = narrow
    target = Rect(-40, 100, 13, 150)
    one = generate(net, params, 4, image_rect=target).image
    res = generate_tiled(net, params, plan(net, target, 48), 4, threads=1)
    assert res.image.data.tobytes() == one.data.tobytes()
    assert res.report.pixels_discarded == 0
    assert res.report.pixels_emitted == target.area()


def test_order_and_threads_do_not_matter(narrow):
    net, params = narrow
    p = plan(net, Rect.square(0, 160), 40)
    base = generate_tiled(net, params, p, 8, threads=1).image.data.tobytes()
    rng = np.random.default_rng(0)
    for threads in (1, 4):
        order = rng.permutation(len(p.tiles))
        assert generate_tiled(net, params, p, 8, order, threads=threads).image.data.tobytes() == base
    assert generate_tiled(net, params, p, 8, list(range(len(p.tiles)))[::-1], threads=3).image.data.tobytes() == base


def test_band_stream_matches_in_memory(narrow):
    net, params = narrow
    p = plan(net, Rect(5, 150, -20, 90), 50)
    whole = generate_tiled(net, params, p, 2, threads=2)
    stream = BandStream(net, params, p, 2, order=np.random.default_rng(1).permutation(len(p.tiles)), verify_seams=True)
    bands = list(stream)
    assert [b.shape[0] for b in bands] == [b - a for a, b in p.band_rows()]
    assert np.concatenate(bands).tobytes() == whole.image.data.tobytes()
    assert stream.report.seam_max_abs_diff == 0.0
    assert stream.report.seams_checked > 0
    assert stream.report.tiles_generated == len(p.tiles)


def test_verify_seams_in_memory(narrow):
    net, params = narrow
    res = generate_tiled(net, params, plan(net, Rect.square(0, 150), 50), 3, verify_seams=True)
    assert res.report.seam_max_abs_diff == 0.0
    # 2 vertical seams in each of 3 tile rows plus 2 horizontal seams across 3 tile columns
    assert res.report.seams_checked == 12


def test_contract_errors(narrow, small):
    net, params = narrow
    p = plan(net, Rect.square(0, 100), 50)
    with pytest.raises(ContractError):
        generate_tiled(small, init_random(small, 0), p, 0)
    with pytest.raises(ContractError):
        generate_tiled(net, params, p, 0, [0, 1, 2, 2])
    with pytest.raises(ContractError):
        generate_tiled(net, params, p, 0, [0, 1, 2])
    crop_net = crop_stitch_net(2, width=2)
    with pytest.raises(ContractError):
        list(BandStream(crop_net, init_random(crop_net, 0), plan(crop_net, Rect.square(0, 40), 32, CROP), 0))


def test_small_net_tiles_with_odd_offsets(small):
    params = bind(small, init_random(small, 9))
    target = Rect(-33, 41, 7, 70)
    one = generate(small, params, 1, image_rect=target).image
    res = generate_tiled(small, params, plan(small, target, 17), 1, threads=2, verify_seams=True)
    assert res.image.data.tobytes() == one.data.tobytes()
    assert res.report.seam_max_abs_diff == 0.0


@pytest.mark.slow
def test_large_canvas_seams(g0, g0_params):
    target = Rect.square(0, 1024)
    stream = BandStream(g0, g0_params, plan(g0, target, 64), 11, verify_seams=True)
    rows = 0
    for band in stream:
        rows += band.shape[0]
        assert np.all(np.abs(band) <= 1.0)
    assert rows == 1024
    rep = stream.report
    assert rep.tiles_generated == 256
    assert rep.seam_max_abs_diff == 0.0
    assert rep.seams_checked == 2 * 16 * 15


# crop-and-stitch ------------------------------------------------------------------


def test_crop_mode_interior_discard(crop3):
    net, params = crop3
    res = generate_tiled(net, params, plan(net, Rect.square(0, 192), 64, CROP), 1)
    rep = res.report
    assert rep.mode == CROP
    assert rep.interior_discard_fraction_exact == "7/16"
    assert rep.interior_discard_fraction == 0.4375
    assert rep.seam_max_abs_diff == 0.0
    assert rep.seams_checked > 0
    assert rep.discard_fraction == rep.pixels_discarded / (rep.pixels_emitted + rep.pixels_discarded)


@pytest.mark.parametrize("K", [2, 3])
@pytest.mark.parametrize("M", [3, 4, 5])
def test_crop_mode_matches_finite_count(K, M):
    net = crop_stitch_net(K, width=2)
    params = bind(net, init_random(net, K))
    N = 6
    a, b = crop_target_side(N, K, M)
    p = plan(net, Rect(a, b, a, b), N * 2**K, CROP)
    assert p.grid_shape == (M, M)
    rep = generate_tiled(net, params, p, 0, threads=1).report
    assert rep.pixels_emitted == (b - a) ** 2
    assert rep.pixels_discarded / (rep.pixels_emitted + rep.pixels_discarded) == float(finite_discard_fraction(N, K, M))
    assert rep.interior_discard_fraction_exact == str(redundancy_fraction_exact(N * 2**K, K))
    assert rep.seam_max_abs_diff == 0.0


def test_crop_mode_stitched_pixels_match_some_tile(crop3):
    net, params = crop3
    p = plan(net, Rect(-20, 70, 5, 90), 64, CROP)
    res = generate_tiled(net, params, p, 2)
    for t in p.tiles:
        full = generate(net, params, 2, latent_rect=t.latent_rect).image
        assert subpatch(full, t.emit_rect).data.tobytes() == subpatch(res.image, t.emit_rect).data.tobytes()

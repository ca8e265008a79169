import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vqpe.imaging import (DegenerateImageError, GrayImage, HotspotParams, ImageFormatError,
                          LungMask, SegmentationError, decode_pgm, encode_pgm, fshs, read_image,
                          remove_artifacts, remove_hotspots, resize, segment_lung, smooth,
                          write_image)


def disc(n, cy, cx, r):
    yy, xx = np.mgrid[0:n, 0:n]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


small_images = arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)))


# --- GrayImage ---------------------------------------------------------------

def test_grayimage_rejects_out_of_range():
    with pytest.raises(ValueError):
        GrayImage(np.array([[0.0, 256.0]]))
    with pytest.raises(ValueError):
        GrayImage(np.array([[-1.0]]))
    with pytest.raises(ValueError):
        GrayImage(np.zeros((0, 3)))


def test_grayimage_is_immutable():
    img = GrayImage(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        img.pixels[0, 0] = 1


# --- P5 I/O ------------------------------------------------------------------

def test_read_2x2(tmp_path):
    p = tmp_path / "a.pgm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
    img = read_image(p)
    assert (img.width, img.height, img.k) == (2, 2, 256)
    assert img.pixels.ravel().tolist() == [0, 255, 128, 64]


def test_header_with_comment():
    img = decode_pgm(b"P5\n# made by hand\n3 1\n255\n" + bytes([1, 2, 3]))
    assert img.pixels.tolist() == [[1, 2, 3]]


@pytest.mark.parametrize("data, needle", [
    (b"P5\n2 2\n65535\n" + bytes(8), "unsupported maxval"),
    (b"P2\n2 2\n255\n" + bytes(4), "magic"),
    (b"P5\n2 2\n255\n" + bytes(3), "truncated"),
    (b"P5\n2\n", "height"),
    (b"P5\nx 2\n255\n" + bytes(4), "non-integer"),
])
def test_malformed(data, needle):
    with pytest.raises(ImageFormatError, match=needle):
        decode_pgm(data)


@given(small_images)
@settings(max_examples=60, deadline=None)
def test_roundtrip_byte_identical(px):
    data = encode_pgm(GrayImage(px.astype(float)))
    assert encode_pgm(decode_pgm(data)) == data


def test_roundtrip_file(tmp_path):
    rng = np.random.default_rng(0)
    px = rng.integers(0, 256, size=(7, 5)).astype(float)
    p = tmp_path / "x.pgm"
    write_image(p, GrayImage(px))
    raw = p.read_bytes()
    assert raw.startswith(b"P5\n5 7\n255\n")
    write_image(tmp_path / "y.pgm", read_image(p))
    assert (tmp_path / "y.pgm").read_bytes() == raw


def test_write_rounds_half_up():
    data = encode_pgm(GrayImage(np.array([[0.5, 1.49, 254.5]])))
    assert list(data[-3:]) == [1, 1, 255]


# --- fshs --------------------------------------------------------------------

def test_fshs_endpoints():
    assert fshs(GrayImage(np.array([[10.0, 100.0]]))).pixels.tolist() == [[0.0, 255.0]]


def test_fshs_midpoint_exact():
    out = fshs(GrayImage(np.array([[10.0, 55.0, 100.0]])))
    assert out.pixels[0, 1] == 127.5


def test_fshs_full_range_unchanged():
    img = GrayImage(np.array([[0.0, 255.0, 17.0]]))
    assert fshs(img) == img


def test_fshs_constant_raises():
    with pytest.raises(DegenerateImageError):
        fshs(GrayImage(np.full((3, 3), 42.0)))


@given(arrays(np.float64, (6, 7), elements=st.floats(0, 255)))
@settings(max_examples=80, deadline=None)
def test_fshs_properties(px):
    if px.min() == px.max():
        return
    out = fshs(GrayImage(px)).pixels.ravel()
    inp = px.ravel()
    assert out.min() == 0 and out.max() == 255
    order = np.argsort(inp, kind="stable")
    assert np.all(np.diff(out[order]) >= 0)


# --- hotspots ----------------------------------------------------------------

def test_hotspot_membership_example():
    # 102 mask pixels with mean 50 and sample std 10, two of which are 85 and 75
    e = np.sqrt(165 / 2 - 0.36)
    vals = np.array([85.0, 75.0] + [50 - 0.6 + e] * 50 + [50 - 0.6 - e] * 50)
    assert vals.mean() == pytest.approx(50) and vals.std(ddof=1) == pytest.approx(10)
    img = GrayImage(vals.reshape(1, -1))
    mask = LungMask(np.ones((1, vals.size), bool))
    out = remove_hotspots(img, mask, HotspotParams(q=3.0)).pixels.ravel()
    assert out[0] == pytest.approx(80.0)     # z = 3.5
    assert out[1] == 75.0                    # z = 2.5
    assert np.array_equal(out[2:], vals[2:])


def test_single_spike_only_changes():
    px = np.full((9, 9), 50.0)
    px[::2, ::2] = 52.0           # give the region a nonzero spread
    px[4, 4] = 200.0
    img = GrayImage(px)
    mask = LungMask(np.ones((9, 9), bool))
    out = remove_hotspots(img, mask, HotspotParams(3.0)).pixels
    changed = np.argwhere(out != px)
    assert changed.tolist() == [[4, 4]]
    vals = px.ravel()
    assert out[4, 4] == pytest.approx(vals.mean() + 3 * vals.std(ddof=1))


def test_hotspot_huge_q_identity():
    rng = np.random.default_rng(1)
    img = GrayImage(rng.uniform(0, 255, (8, 8)))
    mask = LungMask(np.ones((8, 8), bool))
    assert remove_hotspots(img, mask, HotspotParams(1e9)) == img


def test_hotspot_outside_mask_untouched():
    px = np.full((5, 5), 10.0)
    px[0, 0] = 250.0
    px[2, 2] = 12.0
    mask = np.zeros((5, 5), bool)
    mask[1:, 1:] = True
    out = remove_hotspots(GrayImage(px), LungMask(mask), HotspotParams(1.0))
    assert out.pixels[0, 0] == 250.0


def test_hotspot_errors():
    img = GrayImage(np.full((3, 3), 5.0))
    with pytest.raises(SegmentationError):
        remove_hotspots(img, LungMask(np.zeros((3, 3), bool)))
    with pytest.raises(DegenerateImageError):
        remove_hotspots(img, LungMask(np.ones((3, 3), bool)))
    with pytest.raises(ValueError):
        HotspotParams(q=0)


@given(arrays(np.float64, (6, 6), elements=st.floats(0, 255)), st.floats(0.5, 4))
@settings(max_examples=60, deadline=None)
def test_hotspot_never_increases(px, q):
    if np.std(px) == 0:
        return
    img = GrayImage(px)
    mask = LungMask(np.ones(px.shape, bool))
    out = remove_hotspots(img, mask, HotspotParams(q)).pixels
    z = (px - px.mean()) / px.std(ddof=1)
    assert np.all(out <= px + 1e-12)
    assert np.array_equal(out[z < q], px[z < q])


# --- smoothing ---------------------------------------------------------------

def box_oracle(px, r):
    h, w = px.shape
    out = np.empty_like(px)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(-r, r + 1):
                for dx in range(-r, r + 1):
                    acc += px[min(max(y + dy, 0), h - 1), min(max(x + dx, 0), w - 1)]
            out[y, x] = acc / (2 * r + 1) ** 2
    return out


def test_smooth_radius_zero_identity():
    img = GrayImage(np.arange(12.0).reshape(3, 4))
    assert smooth(img, 0) == img


def test_smooth_center_value():
    px = np.full((3, 3), 60.0)
    px[1, 1] = 150.0
    assert smooth(GrayImage(px), 1).pixels[1, 1] == pytest.approx(70.0)


@pytest.mark.parametrize("r", [1, 2, 3])
def test_smooth_matches_brute_force(r):
    px = np.random.default_rng(r).uniform(0, 255, (9, 11))
    np.testing.assert_allclose(smooth(GrayImage(px), r).pixels, box_oracle(px, r), atol=1e-9)


def test_smooth_constant_and_bounds():
    assert smooth(GrayImage(np.full((5, 5), 33.0)), 2).pixels.tolist() == [[33.0] * 5] * 5
    px = np.random.default_rng(3).uniform(0, 255, (20, 20))
    out = smooth(GrayImage(px), 2).pixels
    assert out.min() >= px.min() and out.max() <= px.max()


def test_smooth_preserves_mean_interior_dominated():
    yy, xx = np.mgrid[0:64, 0:64]
    px = 100 + 50 * np.sin(xx / 5.0) * np.cos(yy / 7.0)
    out = smooth(GrayImage(px), 1).pixels
    assert abs(out.mean() - px.mean()) / px.mean() < 0.01


# --- segmentation --------------------------------------------------------------

def test_segment_single_disc():
    d = disc(40, 20, 20, 8)
    img = GrayImage(np.where(d, 200.0, 10.0))
    assert np.array_equal(segment_lung(img, 0.5).bits, d)


def test_segment_two_discs_kept_and_small_blob_dropped():
    left, right, blob = disc(60, 30, 15, 9), disc(60, 30, 45, 8), disc(60, 55, 30, 2)
    img = GrayImage(np.where(left | right | blob, 200.0, 10.0))
    mask = segment_lung(img, 0.5).bits
    # component-area oracle: both lung discs exceed 25% of the largest, the blob does not
    assert right.sum() >= 0.25 * left.sum() > blob.sum()
    assert np.array_equal(mask, left | right)


def test_segment_fills_holes():
    d = disc(40, 20, 20, 10)
    hole = disc(40, 20, 20, 3)
    img = GrayImage(np.where(d & ~hole, 200.0, 0.0))
    assert np.array_equal(segment_lung(img, 0.5).bits, d)


def test_segment_failure():
    with pytest.raises(SegmentationError):
        segment_lung(GrayImage(np.zeros((8, 8))), 0.5)


def test_segment_invariant_to_restretch():
    rng = np.random.default_rng(4)
    px = np.where(disc(32, 16, 16, 9), 150.0, 20.0) + rng.normal(0, 5, (32, 32))
    s = fshs(GrayImage.clipped(px))
    assert segment_lung(s) == segment_lung(fshs(s))
    assert segment_lung(s) == segment_lung(GrayImage(s.pixels * 0.5))


# --- artifacts -----------------------------------------------------------------

def test_remove_artifacts_zeroes_outside():
    lungs = disc(40, 20, 12, 7) | disc(40, 20, 28, 7)
    stomach = disc(40, 36, 30, 3)
    px = np.where(lungs, 180.0, 0.0)
    px[stomach] = 220.0
    img = GrayImage(px)
    mask = segment_lung(img, 0.35)
    out = remove_artifacts(img, mask).pixels
    assert np.all(out[stomach] == 0)
    assert np.array_equal(out[lungs], px[lungs])
    boundary = lungs & ~np.roll(lungs, 1, axis=0)
    assert np.array_equal(out[boundary], px[boundary])


def test_remove_artifacts_full_mask_and_idempotent():
    img = GrayImage(np.random.default_rng(5).uniform(0, 255, (6, 6)))
    assert remove_artifacts(img, LungMask(np.ones((6, 6), bool))) == img
    m = LungMask(np.random.default_rng(6).random((6, 6)) > 0.5)
    once = remove_artifacts(img, m)
    assert remove_artifacts(once, m) == once
    with pytest.raises(SegmentationError):
        remove_artifacts(img, LungMask(np.zeros((6, 6), bool)))


# --- resize --------------------------------------------------------------------

def test_resize_identity():
    img = GrayImage(np.random.default_rng(7).uniform(0, 255, (64, 64)))
    assert resize(img, 64, 64) == img


def test_resize_constant_downscale():
    out = resize(GrayImage(np.full((64, 64), 100.0)), 32, 32)
    assert out.shape == (32, 32)
    assert np.all(out.pixels == 100.0)


def test_resize_upscale_hand_values():
    # pixel-centre mapping: output centres sit at source x = -0.25, 0.25, 0.75, 1.25
    out = resize(GrayImage(np.array([[0.0, 255.0]])), 4, 1).pixels.ravel()
    np.testing.assert_allclose(out, [0.0, 63.75, 191.25, 255.0])
    assert np.all(np.diff(out) >= 0)


def test_resize_downscale_by_two_averages_pairs():
    px = np.arange(16.0).reshape(4, 4)
    out = resize(GrayImage(px), 2, 2).pixels
    np.testing.assert_allclose(out, px.reshape(2, 2, 2, 2).mean(axis=(1, 3)))

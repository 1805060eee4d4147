import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nilutkit import lut3d
from nilutkit.errors import (
    CountMismatch,
    InvalidBits,
    Lut1dUnsupported,
    MalformedRow,
    MissingSize,
    RowCountMismatch,
    SizeOutOfRange,
    UnknownStyle,
)
from nilutkit.lut3d import (
    Lut3d,
    apply_trilinear,
    apply_trilinear_bulk,
    hald_from_raster,
    hald_identity,
    hald_to_samples,
    parse_cube,
    samples_to_hald,
    synth_lut,
    write_cube,
)

IDENTITY2 = """# identity
TITLE "id"
LUT_3D_SIZE 2
0 0 0
1 0 0
0 1 0
1 1 0
0 0 1
1 0 1
0 1 1
1 1 1
"""


def random_lut(n, seed=0):
    rng = np.random.default_rng(seed)
    return Lut3d(size=n, lattice=rng.random((n**3, 3)))


# ---------------------------------------------------------------- parsing


def test_parse_identity_corners():
    lut = parse_cube(IDENTITY2)
    assert lut.size == 2
    assert lut.title == "id"
    assert lut.allclose(lut3d.identity_lut(2), atol=0)


def test_size_33_needs_35937_rows():
    body = "LUT_3D_SIZE 33\n" + "0 0 0\n" * 35936
    with pytest.raises(RowCountMismatch, match="35937"):
        parse_cube(body)
    assert parse_cube(body + "0 0 0\n").lattice.shape == (35937, 3)


def test_missing_size():
    with pytest.raises(MissingSize):
        parse_cube("0 0 0\n1 1 1\n")


@pytest.mark.parametrize(
    "text, exc",
    [
        ("LUT_3D_SIZE 2\n0 0\n", MalformedRow),
        ("LUT_3D_SIZE 2\n0 x 0\n", MalformedRow),
        ("LUT_3D_SIZE 1\n0 0 0\n", SizeOutOfRange),
        ("LUT_3D_SIZE 257\n", SizeOutOfRange),
        ("LUT_1D_SIZE 16\n", Lut1dUnsupported),
    ],
)
def test_parse_errors(text, exc):
    with pytest.raises(exc):
        parse_cube(text)


def test_malformed_row_reports_line():
    text = IDENTITY2.replace("1 1 0\n", "1 1 zero\n")
    with pytest.raises(MalformedRow) as info:
        parse_cube(text)
    assert info.value.line == 7


def test_domain_and_comments():
    text = "LUT_3D_SIZE 2\nDOMAIN_MIN 0 0 0\nDOMAIN_MAX 2 2 2 # wide\n\n" + "\n".join(
        IDENTITY2.splitlines()[3:]
    )
    lut = parse_cube(text)
    assert lut.domain_max == (2.0, 2.0, 2.0)
    # input 1.0 sits halfway across a domain of width 2
    np.testing.assert_allclose(apply_trilinear(lut, [1.0, 1.0, 1.0]), [0.5, 0.5, 0.5])


def test_write_identity_n2():
    text = write_cube(lut3d.identity_lut(2))
    lines = [l for l in text.splitlines() if l and not l.startswith("TITLE")]
    assert lines[0] == "LUT_3D_SIZE 2"
    assert len(lines) == 9


def test_comments_not_preserved():
    assert "#" not in write_cube(parse_cube(IDENTITY2))


@pytest.mark.parametrize("n", [2, 5, 17])
def test_round_trip(n):
    lut = random_lut(n, seed=n)
    assert parse_cube(write_cube(lut)).allclose(lut, atol=1e-6)


def test_round_trip_with_domain():
    lut = Lut3d(size=3, lattice=random_lut(3).lattice, domain_min=(-0.1, 0, 0), domain_max=(1, 2, 4))
    back = parse_cube(write_cube(lut))
    assert back.allclose(lut, atol=1e-6)


# ---------------------------------------------------------------- trilinear


def test_identity_is_identity():
    lut = lut3d.identity_lut(33)
    np.testing.assert_allclose(apply_trilinear(lut, [0.3, 0.7, 0.1]), [0.3, 0.7, 0.1], atol=1e-7)
    pts = np.random.default_rng(0).random((10000, 3))
    np.testing.assert_allclose(apply_trilinear_bulk(lut, pts), pts, atol=1e-7)


@pytest.mark.parametrize("n", [2, 3, 5, 17, 33])
def test_nodes_are_exact(n):
    lut = random_lut(n, seed=n)
    out = apply_trilinear_bulk(lut, lut3d.lattice_grid(n))
    np.testing.assert_array_equal(out, lut.lattice)


def test_midpoint_of_n2_is_corner_mean():
    lut = random_lut(2, seed=9)
    np.testing.assert_allclose(apply_trilinear(lut, [0.5] * 3), lut.lattice.mean(axis=0), atol=1e-15)


def test_out_of_domain_clamps():
    lut = random_lut(5)
    np.testing.assert_array_equal(apply_trilinear(lut, [1.7, -3, 0.5]), apply_trilinear(lut, [1, 0, 0.5]))


def test_bulk_matches_single_and_keeps_shape():
    lut = random_lut(5, seed=1)
    img = np.random.default_rng(2).random((7, 9, 3))
    bulk = apply_trilinear_bulk(lut, img)
    assert bulk.shape == img.shape
    for px, out in zip(img.reshape(-1, 3), bulk.reshape(-1, 3)):
        np.testing.assert_array_equal(apply_trilinear(lut, px), out)


def trilinear_bruteforce(lut, c):
    # independent formulation: explicit weights over the 8 enclosing corners
    n = lut.size
    t = np.clip(c, 0, 1) * (n - 1)
    i0 = np.minimum(np.floor(t).astype(int), n - 2)
    f = t - i0
    acc = np.zeros(3)
    for dr in (0, 1):
        for dg in (0, 1):
            for db in (0, 1):
                w = (f[0] if dr else 1 - f[0]) * (f[1] if dg else 1 - f[1]) * (f[2] if db else 1 - f[2])
                acc += w * lut.node(i0[0] + dr, i0[1] + dg, i0[2] + db)
    return acc


def test_against_bruteforce_weights():
    lut = random_lut(6, seed=4)
    for c in np.random.default_rng(5).random((200, 3)):
        np.testing.assert_allclose(apply_trilinear(lut, c), trilinear_bruteforce(lut, c), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(
    st.integers(2, 9),
    st.integers(0, 2**31),
    st.lists(st.floats(0, 1), min_size=3, max_size=3),
    st.lists(st.floats(-0.05, 0.05), min_size=3, max_size=3),
)
def test_lipschitz_bound(n, seed, c, delta):
    lut = random_lut(n, seed=seed)
    t = lut.table
    diffs = [np.abs(np.diff(t, axis=ax)).max() for ax in range(3)]
    k = (n - 1) * max(diffs)
    c = np.array(c)
    d = np.array(delta)
    lhs = np.abs(apply_trilinear(lut, c) - apply_trilinear(lut, c + d)).max()
    assert lhs <= k * np.abs(d).sum() + 1e-12


# ---------------------------------------------------------------- Hald


@pytest.mark.parametrize("bits, dims", [(8, (4096, 4096)), (7, (2048, 1024)), (1, (4, 2))])
def test_hald_dimensions(bits, dims):
    assert lut3d.hald_dimensions(bits) == dims


def test_hald_b7_counts_and_first_entries():
    h = hald_identity(7)
    assert (h.width, h.height) == (2048, 1024)
    assert h.pixels.shape == (2_097_152, 3)
    np.testing.assert_array_equal(h.pixels[0], [0, 0, 0])
    np.testing.assert_array_equal(h.pixels[1], [1 / 127, 0, 0])


def test_hald_b8_pixel_count():
    assert np.prod(lut3d.hald_dimensions(8)) == 16_777_216


@pytest.mark.parametrize("bits", [1, 2, 3, 4, 5])
def test_hald_bijective_exhaustive(bits):
    q = 2**bits - 1
    codes = np.rint(hald_identity(bits).pixels * q).astype(int)
    keys = codes[:, 0] + codes[:, 1] * (q + 1) + codes[:, 2] * (q + 1) ** 2
    np.testing.assert_array_equal(keys, np.arange((q + 1) ** 3))


def test_hald_b8_bijective_sampled():
    px = hald_identity(8).pixels
    idx = np.random.default_rng(0).integers(0, px.shape[0], 5000)
    codes = np.rint(px[idx] * 255).astype(int)
    np.testing.assert_array_equal(codes[:, 0] + codes[:, 1] * 256 + codes[:, 2] * 65536, idx)


def test_hald_sorted_lexicographically_bgr():
    s = hald_to_samples(hald_identity(4))
    order = np.lexsort((s[:, 0], s[:, 1], s[:, 2]))
    np.testing.assert_array_equal(order, np.arange(len(s)))


def test_hald_round_trip_and_errors():
    h = hald_identity(3)
    back = samples_to_hald(hald_to_samples(h), 3)
    np.testing.assert_array_equal(back.pixels, h.pixels)
    assert hald_to_samples(hald_identity(7)).shape[0] == 2_097_152
    with pytest.raises(CountMismatch):
        samples_to_hald(np.zeros((10, 3)), 3)
    with pytest.raises(InvalidBits):
        hald_identity(9)
    with pytest.raises(InvalidBits):
        hald_identity(0)


def test_hald_raster_snap():
    h = hald_identity(4)
    noisy = h.raster() + 1e-4
    np.testing.assert_array_equal(hald_from_raster(noisy, 4).pixels, h.pixels)


def test_identity_lut_on_hald():
    h = hald_identity(5)
    np.testing.assert_allclose(apply_trilinear_bulk(lut3d.identity_lut(33), h.pixels), h.pixels, atol=1e-12)


# ---------------------------------------------------------------- synthetic


def test_synth_identity_nodes():
    lut = synth_lut("identity", 33)
    np.testing.assert_array_equal(lut.node(4, 17, 32), np.array([4, 17, 32]) / 32)


def test_synth_gamma_is_sampled_power():
    lut = synth_lut("gamma", 9)
    nodes = lut3d.lattice_grid(9)
    np.testing.assert_allclose(lut.lattice, nodes ** np.array([2.2, 1.8, 0.9]), rtol=0, atol=0)


def test_synth_mixer_red_is_first_column():
    lut = synth_lut("channel_mixer", 17)
    # red primary is a node, so trilinear returns the analytic value
    np.testing.assert_allclose(apply_trilinear(lut, [1, 0, 0]), [0.80, 0.10, 0.05], atol=1e-15)


@pytest.mark.parametrize("kind", lut3d.SYNTH_KINDS)
def test_synth_kinds_stay_in_unit_cube(kind):
    lut = synth_lut(kind, 17)
    assert lut.lattice.min() >= 0.0 and lut.lattice.max() <= 1.0


@pytest.mark.parametrize("kind", lut3d.SYNTH_KINDS)
def test_synth_kinds_are_smooth(kind):
    # central second differences stay bounded away from the domain edges
    rng = np.random.default_rng(0)
    x = 0.05 + 0.9 * rng.random((2000, 3))
    h = 1e-4
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        d1 = (lut3d.synth_transform(kind, x + e) - lut3d.synth_transform(kind, x - e)) / (2 * h)
        assert np.all(np.isfinite(d1)) and np.abs(d1).max() < 10


def test_unknown_style():
    with pytest.raises(UnknownStyle):
        synth_lut("sepia", 5)

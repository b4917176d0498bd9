import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spect_bayes.phantoms import (
    SHEPP_LOGAN_3D,
    VoxelGrid,
    euler_rotation,
    make_point_source,
    make_shepp_logan_3d,
    make_uniform,
    validate_grid,
)


def test_point_source_16_center_holds_ten():
    g = make_point_source((16, 16, 16), 10.0)
    assert g.at(8, 8, 8) == 10.0
    assert g.values.sum() == 10.0
    assert np.count_nonzero(g.values) == 1


def test_point_source_zero_value():
    g = make_point_source((4, 4, 4), 0.0)
    assert not g.values.any()


def test_point_source_odd_dims():
    g = make_point_source((3, 3, 3), 5.0)
    assert g.at(1, 1, 1) == 5.0
    assert g.values.sum() == 5.0


def test_point_source_center_on_anisotropic_dims():
    g = make_point_source((5, 4, 7), 2.0)
    assert g.at(2, 2, 3) == 2.0


@pytest.mark.parametrize("dims", [(0, 4, 4), (4, -1, 4), (4, 4)])
def test_invalid_dims(dims):
    with pytest.raises(ValueError):
        make_point_source(dims, 1.0)


def test_negative_value_rejected():
    with pytest.raises(ValueError):
        make_uniform((2, 2, 2), -1.0)


@given(
    dims=st.tuples(*[st.integers(1, 9)] * 3),
    value=st.floats(0, 1e6, allow_nan=False),
)
def test_point_source_sums_to_value(dims, value):
    g = make_point_source(dims, value)
    assert g.values.sum() == value
    validate_grid(g)


def test_uniform_fills():
    assert np.all(make_uniform((4, 4, 4), 1.0).values == 1.0)
    assert make_uniform((4, 4, 4), 1.0).values.size == 64
    assert not make_uniform((2, 2, 2), 0.0).values.any()
    assert make_uniform((8, 8, 8), 3.5).values.sum() == 1792.0


def test_grid_rejects_negative_and_bad_pitch():
    with pytest.raises(ValueError):
        VoxelGrid((1, 1, 2), 1.0, [0.0, -1.0])
    with pytest.raises(ValueError):
        VoxelGrid((1, 1, 1), 0.0, [1.0])
    with pytest.raises(ValueError):
        VoxelGrid((2, 2, 2), 1.0, np.ones(7))


def test_layout_is_x_fastest():
    vals = np.arange(24, dtype=float)
    g = VoxelGrid((4, 3, 2), 1.0, vals)
    assert g.at(1, 0, 0) == 1.0
    assert g.at(0, 1, 0) == 4.0
    assert g.at(0, 0, 1) == 12.0


def test_shepp_logan_nonnegative_and_deterministic():
    a = make_shepp_logan_3d((24, 24, 24))
    b = make_shepp_logan_3d((24, 24, 24))
    assert np.all(a.values >= 0)
    assert a.values.tobytes() == b.values.tobytes()


def test_shepp_logan_too_small():
    with pytest.raises(ValueError):
        make_shepp_logan_3d((7, 8, 8))


def _point_in_ellipsoids(p):
    # direct scalar evaluation, one ellipsoid inequality at a time
    total = 0.0
    for amp, a, b, c, x0, y0, z0, phi, theta, psi in SHEPP_LOGAN_3D:
        r = euler_rotation(phi, theta, psi)
        d = [p[0] - x0, p[1] - y0, p[2] - z0]
        q = [sum(r[i][k] * d[k] for k in range(3)) for i in range(3)]
        if (q[0] / a) ** 2 + (q[1] / b) ** 2 + (q[2] / c) ** 2 <= 1.0:
            total += amp
    return max(total, 0.0)


def test_shepp_logan_center_matches_point_oracle():
    n = 64
    g = make_shepp_logan_3d((n, n, n))
    i = n // 2
    coord = (i + 0.5 - n / 2) / (n / 2)
    expected = _point_in_ellipsoids((coord, coord, coord))
    assert g.at(i, i, i) == pytest.approx(expected, abs=1e-12)


def test_shepp_logan_central_slice_structure():
    # bright outer shell, darker interior (brain), zero outside the skull
    g = make_shepp_logan_3d((32, 32, 32))
    sl = g.array[16]
    assert sl[16, 0] == 0.0
    shell = sl[:, 16].max()
    assert shell == pytest.approx(1.0)
    assert 0 < sl[16, 16] < 0.1
    assert sl[16, 16] < shell


@settings(max_examples=20, deadline=None)
@given(st.tuples(*[st.integers(8, 14)] * 3))
def test_shepp_logan_valid_for_any_dims(dims):
    validate_grid(make_shepp_logan_3d(dims))


def test_save_load_roundtrip(tmp_path):
    g = make_shepp_logan_3d((8, 9, 10), pitch_mm=0.5)
    g.save(tmp_path / "sl")
    assert (tmp_path / "sl.f64raw").stat().st_size == 8 * 9 * 10 * 8
    h = VoxelGrid.load(tmp_path / "sl")
    assert h.dims == g.dims and h.pitch_mm == 0.5
    assert np.array_equal(h.values, g.values)

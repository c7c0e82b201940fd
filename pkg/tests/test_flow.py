import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from millibot.errors import GeometryError, GridError, ParseError
from millibot.flow import (CONSTANT, FlowGrid, Port, PulsatileProfile, SynthGeometry, load_flow_csv,
                           sample_flow, save_flow_csv, synth_two_inlet_flow)
from millibot.phantom import phantom_flow

RECT = PulsatileProfile(3.0, "rectified_sine", 0.0)


def random_grid(rng, ny=7, nx=9, spacing=0.5, masked=True):
    vx = rng.standard_normal((ny, nx))
    vy = rng.standard_normal((ny, nx))
    mask = rng.random((ny, nx)) > 0.2 if masked else np.ones((ny, nx), bool)
    vx[~mask] = 0.0
    vy[~mask] = 0.0
    return FlowGrid((-1.0, 2.0), spacing, vx, vy, mask)


def open_chamber():
    lumen = np.ones((81, 81), bool)
    inlets = (Port((-40.0, -20.0), (1.0, 0.0)), Port((40.0, 20.0), (-1.0, 0.0)))
    return SynthGeometry((-40.0, -40.0), 1.0, lumen, inlets, Port((0.0, 40.0), (0.0, 1.0)))


def test_node_values_exact():
    g = random_grid(np.random.default_rng(0), masked=False)
    for j in range(g.ny):
        for i in range(g.nx):
            v, inside = sample_flow(g, CONSTANT, (g.xs[i], g.ys[j]), 0.3)
            assert inside
            assert v[0] == g.vx[j, i] and v[1] == g.vy[j, i]


def test_cell_centre_average():
    vx = np.array([[1.0, 1.0], [3.0, 3.0]])
    g = FlowGrid((0.0, 0.0), 1.0, vx, np.zeros((2, 2)), np.ones((2, 2), bool))
    v, inside = sample_flow(g, CONSTANT, (0.5, 0.5), 0.0)
    assert inside
    assert np.allclose(v, [2.0, 0.0], atol=1e-15)


def test_peak_of_rectified_sine():
    g = random_grid(np.random.default_rng(1), masked=False)
    p = (g.xs[3], g.ys[2])
    v, _ = sample_flow(g, RECT, p, 1.0 / 12.0)
    assert RECT.g(1.0 / 12.0) == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(v, [g.vx[2, 3], g.vy[2, 3]], rtol=1e-14)


@given(t=st.floats(0, 100), f=st.floats(0.1, 10), ph=st.floats(-3, 3))
def test_modulation_periodic_and_bounded(t, f, ph):
    prof = PulsatileProfile(f, "rectified_sine", ph)
    g = prof.g(t)
    assert 0.0 <= g <= 1.0
    assert abs(g - prof.g(t + 1.0 / f)) <= 1e-12 * max(1.0, t * f)


def test_mean_of_rectified_sine():
    t = np.linspace(0, 1 / 3, 200001)
    assert np.mean(RECT.g(t)) == pytest.approx(RECT.mean(), rel=1e-4)


def test_outside_returns_zero():
    g = random_grid(np.random.default_rng(2))
    v, inside = sample_flow(g, CONSTANT, (-50.0, 0.0), 0.0)
    assert not inside and np.all(v == 0)
    j, i = np.argwhere(~g.domain_mask)[0]
    v, inside = sample_flow(g, CONSTANT, (g.xs[i], g.ys[j]), 0.0)
    assert not inside and np.all(v == 0)


def test_zero_grid_and_scaling():
    rng = np.random.default_rng(3)
    z = FlowGrid.zeros()
    g = random_grid(rng, masked=False)
    for _ in range(200):
        p = rng.uniform([-1.0, 2.0], [-1.0 + 4.0, 2.0 + 3.0])
        t = rng.uniform(0, 5)
        v0, _ = sample_flow(z, RECT, p, t)
        assert np.all(v0 == 0)
        v, _ = sample_flow(g, RECT, p, t)
        v2, _ = sample_flow(g.scaled(2.5), RECT, p, t)
        assert np.allclose(v2, 2.5 * v, rtol=1e-13, atol=1e-15)


def test_lipschitz_continuity():
    rng = np.random.default_rng(4)
    g = random_grid(rng, masked=False)
    dvx = max(np.abs(np.diff(g.vx, axis=0)).max(), np.abs(np.diff(g.vx, axis=1)).max())
    dvy = max(np.abs(np.diff(g.vy, axis=0)).max(), np.abs(np.diff(g.vy, axis=1)).max())
    L = 2 * np.hypot(dvx, dvy) / g.spacing
    delta = 1e-3
    for _ in range(500):
        p = rng.uniform([-1.0, 2.0], [2.9, 4.9])
        d = rng.standard_normal(2)
        d *= delta / np.linalg.norm(d)
        v1, _ = sample_flow(g, CONSTANT, p, 0)
        v2, _ = sample_flow(g, CONSTANT, p + d, 0)
        assert np.linalg.norm(v2 - v1) <= L * delta + 1e-12


@pytest.mark.parametrize("peak", [0.07, 0.10])
def test_synth_peak_speed(peak):
    g = phantom_flow(peak)
    assert g.speed().max() == pytest.approx(peak, abs=1e-9)
    assert np.all(g.vx[~g.domain_mask] == 0) and np.all(g.vy[~g.domain_mask] == 0)


def test_synth_jets_decay_along_centreline():
    g = synth_two_inlet_flow(0.1, open_chamber())
    sp = g.speed()
    # inlet 1 along row y = -20 going +x, inlet 2 along y = +20 going -x
    assert np.all(np.diff(sp[20, 1:41]) < 0)
    assert np.all(np.diff(sp[60, 79:39:-1]) < 0)


def test_synth_port_outside_grid():
    geo = open_chamber()
    bad = SynthGeometry(geo.origin, geo.spacing, geo.lumen,
                        (Port((-90.0, 0.0), (1.0, 0.0)), geo.inlets[1]), geo.outlet)
    with pytest.raises(GeometryError):
        synth_two_inlet_flow(0.1, bad)


def test_csv_round_trip_2x2(tmp_path):
    g = FlowGrid((0.0, 0.0), 1.0, np.array([[0.1, 0.2], [0.3, 1 / 3]]), np.array([[1e-17, 0.0], [-0.5, 2.0]]),
                 np.ones((2, 2), bool))
    path = tmp_path / "f.csv"
    save_flow_csv(g, path)
    assert path.read_text().splitlines()[0] == "x_mm,y_mm,vx_mps,vy_mps"
    back = load_flow_csv(path)
    assert np.array_equal(back.vx, g.vx) and np.array_equal(back.vy, g.vy)
    assert np.array_equal(back.origin, g.origin) and back.spacing == g.spacing


def test_csv_round_trip_sampling(tmp_path):
    rng = np.random.default_rng(5)
    ny = nx = 100
    vx = rng.standard_normal((ny, nx)) * 0.05
    vy = rng.standard_normal((ny, nx)) * 0.05
    g = FlowGrid((-10.0, -20.0), 0.25, vx, vy, np.ones((ny, nx), bool))
    path = tmp_path / "big.csv"
    save_flow_csv(g, path)
    back = load_flow_csv(path)
    for _ in range(1000):
        p = rng.uniform([-10.0, -20.0], [-10.0 + 24.75, -20.0 + 24.75])
        t = rng.uniform(0, 1)
        a, _ = sample_flow(g, RECT, p, t)
        b, _ = sample_flow(back, RECT, p, t)
        assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_csv_keeps_domain_mask(tmp_path):
    g = random_grid(np.random.default_rng(6))
    path = tmp_path / "m.csv"
    save_flow_csv(g, path)
    back = load_flow_csv(path)
    assert np.array_equal(back.domain_mask, g.domain_mask)


def test_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x_mm,y_mm,vx_mps,vy_mps\n0,0,1,2\n1,0,1\n0,1,0,0\n1,1,0,0\n")
    with pytest.raises(ParseError, match=":3:"):
        load_flow_csv(path)


def test_csv_non_rectilinear(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("x_mm,y_mm,vx_mps,vy_mps\n0,0,0,0\n1,0,0,0\n3,0,0,0\n0,1,0,0\n1,1,0,0\n3,1,0,0\n")
    with pytest.raises(GridError):
        load_flow_csv(path)
    path.write_text("x_mm,y_mm,vx_mps,vy_mps\n0,0,0,0\n1,0,0,0\n0,1,0,0\n")
    with pytest.raises(GridError):
        load_flow_csv(path)


def test_grid_invariants():
    with pytest.raises(GridError):
        FlowGrid((0, 0), 0.0, np.zeros((2, 2)), np.zeros((2, 2)), np.ones((2, 2), bool))
    with pytest.raises(GridError):
        FlowGrid((0, 0), 1.0, np.ones((2, 2)), np.zeros((2, 2)), np.zeros((2, 2), bool))
    with pytest.raises(GridError):
        FlowGrid((0, 0), 1.0, np.full((2, 2), np.nan), np.zeros((2, 2)), np.ones((2, 2), bool))

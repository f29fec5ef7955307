import numpy as np
import pytest

from poolgame.equilibrium import EngineOptions, ZeroBetaAxis, mesh_grid
from poolgame.equilibrium.mesh import cell_eta, default_ranges, grid_values


def test_grid_values_are_inclusive_and_rounded():
    v = grid_values(5.0, 13.0, 0.1)
    assert len(v) == 81 and v[0] == 5.0 and v[-1] == 13.0
    assert 10.0 in v and 7.3 in v
    with pytest.raises(ValueError):
        grid_values(0.0, 1.0, 0.0)


def test_default_ranges_run_from_capacity_to_intercept(game):
    r = default_ranges(game("haverly-sym-pc2"))
    assert r["H"] == pytest.approx((13.0 - 0.02 * 200, 13.0))
    assert r["L"] == pytest.approx((23.0 - 0.04 * 400, 23.0))


@pytest.mark.parametrize("name, prices, want", [
    ("haverly-sym-pc2", {"H": 10.0, "L": 14.0}, 175.0),
    ("haverly-sym-pc2", {"H": 10.0, "L": 15.0}, 200.0),
    ("haverly-2p-pc-cont", {"H": 10.0, "L": 15.0}, 0.0),
])
def test_cell_values(game, name, prices, want):
    eta, hit = cell_eta(game(name), prices, EngineOptions())
    assert not hit
    assert eta == pytest.approx(want, abs=1e-2)


def test_small_grid_minimum(game):
    res = mesh_grid(game("haverly-sym-pc2"), {"H": (9.5, 10.5), "L": (13.5, 14.5)}, step=0.5)
    assert res.eta.shape == (3, 3)
    where, val = res.argmin()
    assert where == {"H": 10.0, "L": 14.0}
    assert val == pytest.approx(175.0, abs=1e-2)
    assert np.all(res.eta >= 175.0 - 1e-2)


def test_zero_slope_and_cournot_games_are_rejected(game):
    with pytest.raises(ZeroBetaAxis):
        mesh_grid(game("haverly-single"))
    with pytest.raises(ValueError):
        mesh_grid(game("haverly-2p-nc-cont"))
    with pytest.raises(ValueError):
        mesh_grid(game("haverly-sym-pc2"), {"H": (9.0, 10.0)})

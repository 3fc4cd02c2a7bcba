import math

import numpy as np
import pytest

from floorloc import maps
from floorloc.database import build_ray_database, read_database, write_database
from floorloc.errors import FormatError
from floorloc.floorplan import OccupancyGrid, render_circular_scan


def test_all_free_3x3():
    g = OccupancyGrid(np.zeros((3, 3), bool), 0.1)
    db = build_ray_database(g, 16, 15.0)
    assert db.n_free == 9
    assert not db.valid.any()


def test_single_free_cell():
    cells = np.ones((5, 5), bool)
    cells[2, 3] = False
    db = build_ray_database(OccupancyGrid(cells, 0.1), 8, 15.0)
    assert db.n_free == 1
    assert db.index_of(3, 2) == 0 and db.index_of(0, 0) is None
    assert np.allclose(db.scan(0).ranges[[0, 2, 4, 6]], 0.05)


def test_all_occupied_is_empty():
    db = build_ray_database(OccupancyGrid(np.ones((4, 4), bool), 0.1), 8, 15.0)
    assert db.n_free == 0 and db.ranges.shape == (0, 8)


def test_matches_per_cell_rendering():
    room = maps.box_room(1.8, 1.8, 0.1)  # 20 x 20 cells with the walls
    db = build_ray_database(room, 36, 15.0)
    assert (room.width, room.height) == (20, 20)
    assert np.array_equal(db.free_mask, room.free_mask)
    for iy in range(room.height):
        for ix in range(room.width):
            if room.cells[iy, ix]:
                continue
            s = render_circular_scan(room, room.cell_center(ix, iy), 36, 15.0)
            stored = db.scan_at(ix, iy)
            assert np.array_equal(stored.ranges, s.ranges) and np.array_equal(stored.valid, s.valid)
            assert stored.is_circular and stored.angular_step == pytest.approx(2 * math.pi / 36)


def test_order_independent():
    g = maps.two_room()
    a = build_ray_database(g, 24, 15.0)
    b = build_ray_database(OccupancyGrid(g.cells.copy(), g.resolution, g.origin), 24, 15.0)
    assert np.array_equal(a.ranges, b.ranges)


def test_file_roundtrip(tmp_path):
    g = maps.corridor(0.1)
    db = build_ray_database(g, 60, 12.0)
    write_database(db, tmp_path / "db.flrd")
    back = read_database(tmp_path / "db.flrd")
    raw = (tmp_path / "db.flrd").read_bytes()
    assert raw[:4] == b"FLRD" and int.from_bytes(raw[4:6], "little") == 1
    assert back.ray_count == 60 and back.max_range == 12.0 and back.resolution == 0.1
    assert back.origin == db.origin
    assert np.array_equal(back.free_mask, db.free_mask)
    assert np.array_equal(back.valid, db.valid)
    assert np.allclose(back.ranges, db.ranges, atol=1e-6)


def test_read_rejects_garbage(tmp_path):
    (tmp_path / "x").write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(FormatError):
        read_database(tmp_path / "x")
    (tmp_path / "y").write_bytes(b"FL")
    with pytest.raises(FormatError):
        read_database(tmp_path / "y")


def test_database_is_read_only(two_room_db):
    with pytest.raises(ValueError):
        two_room_db.ranges[0, 0] = 1.0

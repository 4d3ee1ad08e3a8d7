import numpy as np
import pytest

from hnmg import load_coarse_mesh, save_coarse_mesh, write_vtk
from hnmg.mesh import MeshError
from hnmg.meshes import box_hexes, square_quads

MESH_2X2 = """\
dim 2
nodes 9
0 0
0.5 0
1 0
0 0.5
0.5 0.5
1 0.5
0 1
0.5 1
1 1
elements 4 quad 1
0 1 4 3
1 2 5 4
3 4 7 6
4 5 8 7
"""


def test_load_2x2(tmp_path):
    p = tmp_path / "m.msh"
    p.write_text(MESH_2X2)
    mesh = load_coarse_mesh(p)
    lev = mesh.levels[0]
    assert lev.n_elems == 4 and lev.n_nodes == 9
    assert len(lev.hang.ids) == 0
    assert lev.dirichlet.sum() == 8


def test_load_single_hex(tmp_path):
    mesh = box_hexes(1)
    p = tmp_path / "hex.msh"
    save_coarse_mesh(p, mesh)
    again = load_coarse_mesh(p)
    lev = again.levels[0]
    assert lev.n_elems == 1 and lev.n_nodes == 8


def test_load_repeated_node_rejected(tmp_path):
    bad = MESH_2X2.replace("0 1 4 3", "0 1 1 3")
    p = tmp_path / "bad.msh"
    p.write_text(bad)
    with pytest.raises(MeshError):
        load_coarse_mesh(p)


def test_load_malformed_header(tmp_path):
    p = tmp_path / "bad.msh"
    p.write_text("dim 2\nnodes nope\n")
    with pytest.raises((MeshError, ValueError)):
        load_coarse_mesh(p)


def test_roundtrip_matches(tmp_path):
    mesh = square_quads(3, degree=2)
    p = tmp_path / "q2.msh"
    save_coarse_mesh(p, mesh)
    again = load_coarse_mesh(p)
    assert np.array_equal(again.levels[0].conn, mesh.levels[0].conn)
    np.testing.assert_allclose(again.levels[0].coords, mesh.levels[0].coords)


def test_vtk_output_schema(tmp_path):
    mesh = square_quads(2)
    mesh.refine([0])
    lev = mesh.levels[1]
    p = tmp_path / "m.vtk"
    write_vtk(p, lev, point_scalars={"classification": lev.klass.astype(np.int32)},
              cell_scalars={"depth": lev.depth.astype(np.int32)})
    text = p.read_text().splitlines()
    assert text[0] == "# vtk DataFile Version 3.0"
    assert "DATASET UNSTRUCTURED_GRID" in text[:5]
    ip = text.index(f"POINTS {lev.n_nodes} double")
    ic = text.index(f"CELLS {lev.n_elems} {lev.n_elems * 5}")
    it = text.index(f"CELL_TYPES {lev.n_elems}")
    assert ip < ic < it
    assert f"POINT_DATA {lev.n_nodes}" in text
    assert "SCALARS classification int 1" in text
    assert f"CELL_DATA {lev.n_elems}" in text
    # quad cells carry VTK type 9
    assert text[it + 1] == "9"

import numpy as np
import pytest

from foliaflow.mesh import MeshError, compute_frames
from foliaflow.shapes import ShapeRecipe, cap2d, cortex3d, fold2d, generate


def layer_lengths(mesh):
    out = []
    for nu in range(mesh.num_layers):
        x = mesh.layer(nu)
        out.append(np.linalg.norm(x[mesh.faces[:, 1]] - x[mesh.faces[:, 0]], axis=1).sum())
    return np.array(out)


def test_cap_layout_and_growing_arcs():
    mesh, chart = cap2d(resolution=50, num_layers=3)
    assert (mesh.num_layers, mesh.vertices_per_layer) == (3, 50)
    lengths = layer_lengths(mesh)
    assert np.all(np.diff(lengths) > 0)
    # concentric half circles of radius 0.5, 0.6, 0.7 (polygonal, so slightly short)
    np.testing.assert_allclose(lengths, np.pi * np.array([0.5, 0.6, 0.7]), rtol=1e-3)
    assert np.all(mesh.cell_volumes() > 0)
    assert chart.params[0, 0] == 0.0


def test_cap_volume_matches_annulus():
    mesh, _ = cap2d(resolution=400, num_layers=3)
    assert mesh.volume() == pytest.approx(0.5 * np.pi * (0.7**2 - 0.5**2), rel=1e-4)


def test_flat_fold_has_equal_frames():
    mesh, chart = fold2d(resolution=31, amplitude=0.0)
    np.testing.assert_allclose(mesh.vertices[:, 1].reshape(mesh.num_layers, -1),
                               np.repeat(np.linspace(-0.1, 0.1, mesh.num_layers)[:, None], 31, 1),
                               atol=1e-15)
    frames = compute_frames(mesh).matrices
    np.testing.assert_allclose(frames, np.broadcast_to(frames[0], frames.shape), atol=1e-14)
    np.testing.assert_allclose(chart.box[1], [3.6])


def test_fold_arc_length_chart_is_uniform():
    mesh, chart = fold2d(resolution=61)
    steps = np.diff(chart.params[:, 0])
    assert np.all(steps > 0)
    assert steps.max() / steps.min() < 1.02


def test_cortex_prisms_positive_and_transverse():
    mesh, chart = cortex3d()
    assert np.all(mesh.prism_volumes() > 0)
    assert np.all(mesh.cell_volumes() > 0)
    frames = compute_frames(mesh)
    n = np.cross(frames.tangents[:, :, 0], frames.tangents[:, :, 1])
    cos = np.abs(np.einsum("ij,ij->i", n, frames.transversal))
    cos /= np.linalg.norm(n, axis=1)
    assert np.degrees(np.arcsin(np.clip(cos, 0, 1))).min() > 30.0
    lo, hi = chart.box
    np.testing.assert_allclose(lo, [1.1, 0.0])
    np.testing.assert_allclose(hi, [2.7, 1.2])


@pytest.mark.parametrize("kind", ["cap2d", "fold2d", "cortex3d"])
def test_chart_round_trip(kind):
    mesh, chart = generate(ShapeRecipe(kind))
    mid = mesh.layer(chart.layer)
    for k in (0, mesh.vertices_per_layer // 3, mesh.vertices_per_layer - 1):
        c = chart.coordinates_of(k)
        np.testing.assert_array_equal(chart.invert(mid[k], mesh), c)
        loc = chart.center(c)
        np.testing.assert_allclose(loc.position(mesh), mid[k], atol=1e-12)
        assert chart.center(c, "snap").columns == (k,)


def test_self_intersection_rejected():
    with pytest.raises(MeshError, match="self-intersect"):
        fold2d(thickness=0.6, amplitude=0.5)
    with pytest.raises(MeshError, match="self-intersect"):
        cortex3d(thickness=1.0)


@pytest.mark.parametrize("kwargs", [dict(resolution=4), dict(num_layers=2)])
def test_size_checks(kwargs):
    with pytest.raises(ValueError):
        cap2d(**kwargs)
    with pytest.raises(ValueError):
        generate(ShapeRecipe("cortex3d", **kwargs))


def test_unknown_kind():
    with pytest.raises(ValueError, match="unknown shape"):
        generate(ShapeRecipe("torus"))


def test_recipe_overrides():
    mesh, _ = generate(ShapeRecipe("fold2d", resolution=41, num_layers=3, geometry={"width": 2.0, "periods": 1.0}))
    assert mesh.vertices_per_layer == 41 and mesh.num_layers == 3
    assert mesh.vertices[:, 0].max() == pytest.approx(2.0, abs=0.15)

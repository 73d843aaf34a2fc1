import numpy as np
import pytest

from foliaflow.mesh import build_foliated_mesh
from foliaflow.shapes import grid_faces

ACCEPTANCE_LINES: list[str] = []


def flat_band(n=11, num_layers=3, length=1.0, spacing=0.05):
    """Straight 2D band: layer nu is the segment [0, length] at height nu * spacing."""
    x = np.linspace(0.0, length, n)
    layers = [np.column_stack([x, np.full(n, nu * spacing)]) for nu in range(num_layers)]
    faces = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    return build_foliated_mesh(layers, faces)


def flat_slab(nx=5, ny=5, num_layers=3, size=1.0, spacing=0.05):
    """Flat 3D slab over [0, size]^2 with horizontal layers."""
    u, v = np.meshgrid(np.linspace(0, size, nx), np.linspace(0, size, ny), indexing="ij")
    base = np.column_stack([u.ravel(), v.ravel()])
    layers = [np.column_stack([base, np.full(len(base), nu * spacing)]) for nu in range(num_layers)]
    return build_foliated_mesh(layers, grid_faces(nx, ny))


def wavy_slab(rng, nx=5, ny=4, num_layers=3, amp=0.05, jitter=0.01, spacing=0.1):
    """Randomly perturbed, gently curved 3D slab (still valid)."""
    u, v = np.meshgrid(np.linspace(0, 1, nx), np.linspace(0, 1, ny), indexing="ij")
    base = np.column_stack([u.ravel(), v.ravel()])
    base = base + jitter * rng.standard_normal(base.shape)
    height = amp * np.sin(3 * base[:, 0]) * np.cos(2 * base[:, 1])
    layers = []
    for nu in range(num_layers):
        z = height + nu * spacing + jitter * rng.standard_normal(len(base))
        layers.append(np.column_stack([base, z]))
    return build_foliated_mesh(layers, grid_faces(nx, ny))


def wavy_band(rng, n=9, num_layers=3, amp=0.05, jitter=0.01, spacing=0.1):
    x = np.linspace(0, 1, n) + jitter * rng.standard_normal(n)
    x.sort()
    y0 = amp * np.sin(4 * x)
    layers = [np.column_stack([x, y0 + nu * spacing + jitter * rng.standard_normal(n)])
              for nu in range(num_layers)]
    return build_foliated_mesh(layers, np.stack([np.arange(n - 1), np.arange(1, n)], axis=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        # lines start with "[PASS] criterion N:"; keep run order within one criterion
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)

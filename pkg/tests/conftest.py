import numpy as np
import pytest

from meshtex import shapes
from meshtex.field import solve_orientation_field


@pytest.fixture(scope="session")
def plane_mesh():
    return shapes.plane_grid(30, 30, 1.0, 1.0)


@pytest.fixture(scope="session")
def icosphere_mesh():
    return shapes.icosphere(3, 1.0)


@pytest.fixture(scope="session")
def torus_mesh():
    return shapes.torus()


@pytest.fixture(scope="session")
def cube_mesh():
    return shapes.cube(10, 1.0)


@pytest.fixture(scope="session")
def cylinder_mesh():
    return shapes.cylinder(n_around=96, n_along=20, radius=0.5, height=1.0)


@pytest.fixture(scope="session")
def plane_field(plane_mesh):
    return solve_orientation_field(plane_mesh, seed=0)


@pytest.fixture(scope="session")
def icosphere_field(icosphere_mesh):
    return solve_orientation_field(icosphere_mesh, seed=0)


@pytest.fixture(scope="session")
def cube_field(cube_mesh):
    return solve_orientation_field(cube_mesh, seed=0)


@pytest.fixture(scope="session")
def cylinder_field(cylinder_mesh):
    return solve_orientation_field(cylinder_mesh, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)

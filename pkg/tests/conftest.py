import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from shapes import paint_cube, paint_sphere  # noqa: F401 (re-export)

from parttex.field import FieldConfig
from parttex.mesh import Mesh
from parttex.primitives import icosphere

FIXTURES = Path(__file__).parent.parent / "fixtures"


@pytest.fixture
def triangle():
    """One CCW triangle in the z=0 plane, normals +z."""
    return Mesh(
        vertices=np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]),
        faces=np.array([[0, 1, 2]]),
        vertex_normals=np.tile([0.0, 0.0, 1.0], (3, 1)),
    )


@pytest.fixture(scope="session")
def sphere():
    return icosphere(3)


@pytest.fixture(scope="session")
def small_sphere():
    return icosphere(2)


@pytest.fixture(scope="session")
def painted_sphere(sphere):
    return paint_sphere(sphere)


@pytest.fixture(scope="session")
def painted_cube():
    return paint_cube()


@pytest.fixture
def tiny_field_config():
    """~100-parameter field for finite-difference oracles."""
    return FieldConfig(levels=2, base_resolution=4, max_resolution=8,
                       table_size=8, features=2, hidden=8)

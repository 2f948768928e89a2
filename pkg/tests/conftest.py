import numpy as np
import pytest

from microricci import TriMesh, gen_icosphere


@pytest.fixture
def tetra():
    pos = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    faces = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]])
    return TriMesh(pos, faces)


@pytest.fixture(scope="session")
def ico1():
    return gen_icosphere(1)


@pytest.fixture(scope="session")
def ico2():
    return gen_icosphere(2)


@pytest.fixture(scope="session")
def ico3():
    return gen_icosphere(3)


def tetra_mesh():
    pos = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    faces = np.array([[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]])
    return TriMesh(pos, faces)

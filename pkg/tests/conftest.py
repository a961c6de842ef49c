import numpy as np
import pytest

from dieburst import kernels, load_layout, load_mkid_fixture
from dieburst.cli import packaged_data_path
from dieburst.geometry import DieBox, Layout


@pytest.fixture(scope="session")
def fixture_params():
    return load_mkid_fixture()


@pytest.fixture(scope="session")
def by_label(fixture_params):
    return {p.label: p for p in fixture_params}


@pytest.fixture(scope="session")
def example_layout():
    return load_layout(packaged_data_path("example_layout.json"))


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # compile the numba kernels once so timed tests measure the algorithms
    kernels.warm_up()


def random_two_box_layout(rng: np.random.Generator) -> Layout:
    """Two thin boxes separated along a random axis, random lateral offsets."""
    axis = int(rng.integers(0, 3))

    def dims():
        d = np.empty(3)
        for k in range(3):
            d[k] = rng.uniform(0.2, 1.5) if k == axis else rng.uniform(4.0, 12.0)
        return d

    d1 = dims()
    d2 = dims()
    gap = rng.uniform(0.1, 1.5)
    c2 = np.zeros(3)
    c2[axis] = d1[axis] + gap
    for k in range(3):
        if k != axis:
            c2[k] = rng.uniform(-3.0, 3.0)
    return Layout(dies=[DieBox(np.zeros(3), d1, "a"), DieBox(c2, d2, "b")])

from __future__ import annotations

import pytest

from fairdispatch.network import grid_partition, make_grid


@pytest.fixture(scope="session")
def grid3():
    return make_grid(3, 3, 1.0)


@pytest.fixture(scope="session")
def grid4_60():
    return make_grid(4, 4, 60.0)


@pytest.fixture(scope="session")
def halves4():
    # 4x4 grid split into left/right halves
    return grid_partition(4, 4, 4, 2)

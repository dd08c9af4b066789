"""Pytest configuration and fixtures."""

import pytest

from mdp import PolicyTable, ValueFunction
from model_nonuniform import NonUniformMDP
from model_nonuniform import build_mdp as build_nonuniform
from model_uniform import UniformMDP
from model_uniform import build_mdp as build_uniform
from models.params import NonUniformParams, SizeDistribution, UniformParams
from solver import (
    relative_value_iteration,
    structured_vi_nonuniform,
    structured_vi_uniform,
)


@pytest.fixture(scope="session")
def small_uniform() -> UniformParams:
    """A uniform instance small enough to solve in well under a second."""
    return UniformParams(d=3, p=0.3, delta_max=60)


@pytest.fixture(scope="session")
def small_uniform_mdp(small_uniform: UniformParams) -> UniformMDP:
    return build_uniform(small_uniform)


@pytest.fixture(scope="session")
def solved_uniform(
    small_uniform: UniformParams,
) -> tuple[ValueFunction, PolicyTable]:
    """Structured solution of the small uniform instance."""
    return structured_vi_uniform(small_uniform)


@pytest.fixture(scope="session")
def medium_uniform() -> UniformParams:
    """d=5, p=0.2 with a cap the AoI practically never reaches."""
    return UniformParams(d=5, p=0.2, delta_max=200)


@pytest.fixture(scope="session")
def solved_medium_uniform(
    medium_uniform: UniformParams,
) -> tuple[ValueFunction, PolicyTable]:
    return structured_vi_uniform(medium_uniform)


@pytest.fixture(scope="session")
def sizes_58() -> SizeDistribution:
    """Sizes 5 and 8 with equal probability."""
    return SizeDistribution.parse("5:0.5,8:0.5")


@pytest.fixture(scope="session")
def small_nonuniform() -> NonUniformParams:
    return NonUniformParams(
        p=0.3, f_b=SizeDistribution.parse("3:0.5,4:0.5"), delta_max=40
    )


@pytest.fixture(scope="session")
def small_nonuniform_mdp(small_nonuniform: NonUniformParams) -> NonUniformMDP:
    return build_nonuniform(small_nonuniform)


@pytest.fixture(scope="session")
def solved_nonuniform(
    small_nonuniform: NonUniformParams,
) -> tuple[ValueFunction, PolicyTable]:
    return structured_vi_nonuniform(small_nonuniform)


@pytest.fixture(scope="session")
def plain_nonuniform(
    small_nonuniform_mdp: NonUniformMDP,
) -> tuple[ValueFunction, PolicyTable]:
    return relative_value_iteration(small_nonuniform_mdp)


@pytest.fixture(scope="session")
def full_uniform() -> UniformParams:
    """d=10, p=0.07 at the full cap of 1000."""
    return UniformParams(d=10, p=0.07, delta_max=1000)


@pytest.fixture(scope="session")
def solved_full_uniform(
    full_uniform: UniformParams,
) -> tuple[ValueFunction, PolicyTable]:
    return structured_vi_uniform(full_uniform)

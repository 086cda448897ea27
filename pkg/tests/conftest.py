"""Shared tiny instances with hand-computed expectations."""
import pytest

from adasub.instances import ModularUtility, CoverUtility, build_bags, build_truncation_pair
from adasub.model import CoverageSpec, Instance, TablePrior


@pytest.fixture(scope="session")
def anti_inst() -> Instance:
    """Two perfectly anticorrelated elements, value = sum of observed outcomes.

    Exactly one element pays 1: any single pick earns 0.5 on average, both
    picks always earn 1.  Greedy trajectories score [0.5, 1.0] and [0.5, 0.0].
    """
    return Instance(
        name="anti",
        n=2,
        num_outcomes=2,
        prior=TablePrior([((0, 1), 0.5), ((1, 0), 0.5)]),
        utility=ModularUtility([[0.0, 1.0], [0.0, 1.0]]),
    )


@pytest.fixture(scope="session")
def trunc_pair():
    return build_truncation_pair()


@pytest.fixture(scope="session")
def tiny_cover() -> Instance:
    """Deterministic: element 0 covers {0}, element 1 covers {1}, element 2
    covers nothing; quota 2 forces exactly the two useful picks."""
    prior = TablePrior([((0, 0, 0), 1.0)])
    utility = CoverUtility(2, [[[0]], [[1]], [[]]])
    return Instance(
        name="tiny-cover",
        n=3,
        num_outcomes=1,
        prior=prior,
        utility=utility,
        coverage=CoverageSpec(quota=2.0, eta=1.0),
    )


@pytest.fixture(scope="session")
def bags2() -> Instance:
    return build_bags(2)


@pytest.fixture(scope="session")
def bags3() -> Instance:
    return build_bags(3)

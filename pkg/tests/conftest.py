import pytest

from modal_market import builtin_5node, builtin_sioux, solve


@pytest.fixture(scope="session")
def five_node():
    return builtin_5node()


@pytest.fixture(scope="session")
def five_node_solution(five_node):
    return solve(five_node)


@pytest.fixture(scope="session")
def sioux_scenarios():
    return {k: builtin_sioux(k) for k in (1, 2, 3)}


@pytest.fixture(scope="session")
def sioux_solutions(sioux_scenarios):
    return {k: solve(sc) for k, sc in sioux_scenarios.items()}

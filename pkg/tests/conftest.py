import warnings

import numpy as np
import pytest

from ionsim import crystal


@pytest.fixture(scope="session")
def mg_modes():
    chain = crystal.mg_chain()
    return chain, crystal.compute_modes(chain, crystal.solve_equilibrium(chain))


@pytest.fixture(autouse=True)
def _quiet_model_warnings():
    # physics warnings (uncooled modes etc.) are asserted explicitly where they matter
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


def random_density_matrix(rng, d, rank=None):
    rank = d if rank is None else rank
    a = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])

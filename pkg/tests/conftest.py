"""Shared fixtures plus a terminal summary of the acceptance criteria."""

import numpy as np
import pytest

import stmfem as st

_acceptance_results = {}


def record_criterion(name, passed, detail=""):
    _acceptance_results[name] = (passed, detail)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def mms_problem():
    """The standard manufactured solution and its problem data."""
    from stmfem.timeloop import ProblemData

    coeff = st.CoefficientField.identity()
    exact = st.mms_standard(coeff)
    data = ProblemData(
        diffusion=coeff,
        initial_scalar=exact.initial_scalar(),
        source=exact.source,
        final_time=1.0,
        initial_flux=exact.initial_flux(),
    )
    return exact, data


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_acceptance_results):
        passed, detail = _acceptance_results[name]
        status = "PASS" if passed else "FAIL"
        line = f"{name}: {status}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)

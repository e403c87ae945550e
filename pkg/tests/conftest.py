"""Shared test fixtures for the LLS lab."""

import os
import sys

import pytest

# Add project root to path so tests can import model, measure, etc.
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from scenarios import (  # noqa: E402
    scenario_binary_counterexample, scenario_remark_tail_equivalent, scenario_sqrt_decay,
)


@pytest.fixture(scope="session")
def binary():
    return scenario_binary_counterexample()


@pytest.fixture(scope="session")
def remark():
    return scenario_remark_tail_equivalent()


@pytest.fixture(scope="session")
def sqrt_decay():
    return scenario_sqrt_decay()

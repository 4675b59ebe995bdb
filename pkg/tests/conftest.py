from __future__ import annotations

from pathlib import Path

import pytest

from promptrd.constants import read_constants

ROOT = Path(__file__).resolve().parents[1]
FIXTURE = ROOT / "fixtures" / "alpha_beta.csv"

ALPHA = [(0.1, 0.3), (0.1, 0.39), (0.2, 0.15), (0.2, 0.27), (0.2, 0.42), (0.3, 0.125),
         (0.3, 0.28), (0.3, 0.35), (0.4, 0.05), (0.4, 0.2), (0.4, 0.31)]
BETA = [(0.2, 0.4), (0.2, 0.6), (0.4, 0.2), (0.4, 0.45), (0.4, 0.65), (0.6, 0.25),
        (0.6, 0.5), (0.6, 0.58)]


@pytest.fixture
def fixture_path() -> Path:
    return FIXTURE


@pytest.fixture
def alpha_beta_exact() -> dict:
    return read_constants(FIXTURE, exact=True).point_sets()


@pytest.fixture
def alpha_beta() -> dict:
    return read_constants(FIXTURE).point_sets()

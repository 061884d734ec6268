"""Shared fixtures: certified start sets are expensive, so build them once."""

import numpy as np
import pytest

from trifocal.geometry import CHICAGO, CLEVELAND
from trifocal.monodromy import (
    format_start_set,
    generate_seed_pair,
    monodromy_solve,
    parse_start_set,
)

THREADS = 2


@pytest.fixture(scope="session")
def chicago_start_set():
    pair = generate_seed_pair(CHICAGO, seed=0)
    start_set = monodromy_solve(CHICAGO, pair, seed=1, threads=THREADS)
    assert start_set.complete, "chicago ab-initio run must reach 312 solutions"
    return start_set


@pytest.fixture(scope="session")
def cleveland_start_set():
    pair = generate_seed_pair(CLEVELAND, seed=0)
    start_set = monodromy_solve(CLEVELAND, pair, seed=1, threads=THREADS)
    assert start_set.complete, "cleveland ab-initio run must reach 216 solutions"
    return start_set


@pytest.fixture(scope="session")
def chicago_start_set_file(chicago_start_set, tmp_path_factory):
    path = tmp_path_factory.mktemp("startsets") / "chicago.txt"
    path.write_text(format_start_set(chicago_start_set))
    # sanity: the file round-trips
    loaded = parse_start_set(path.read_text())
    assert np.array_equal(loaded.solutions, chicago_start_set.solutions)
    return path

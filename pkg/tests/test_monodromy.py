"""Seed construction, monodromy bookkeeping, and the start-set format."""

import numpy as np
import pytest

from trifocal.errors import InvalidInputError
from trifocal.geometry import CHICAGO, CLEVELAND
from trifocal.monodromy import (
    TARGET_DEGREE,
    format_start_set,
    generate_seed_pair,
    monodromy_solve,
    parse_start_set,
    verify_closure,
)
from trifocal.systems import normalize_blocks


class TestSeedPair:
    @pytest.mark.parametrize("kind", [CHICAGO, CLEVELAND])
    def test_seed_residual(self, kind):
        system, A_star, u_star = generate_seed_pair(kind, seed=3)
        assert np.max(np.abs(system.residual(u_star, A_star))) < 1e-10
        assert np.max(np.abs(A_star.imag)) > 0.01  # genuinely complex point

    def test_charts_hold(self):
        system, A_star, u_star = generate_seed_pair(CHICAGO, seed=4)
        assert abs(system.charts[0] @ u_star[0:4] - 1.0) < 1e-10
        assert abs(system.charts[1] @ u_star[4:8] - 1.0) < 1e-10

    def test_unknown_kind_rejected(self):
        with pytest.raises(InvalidInputError):
            generate_seed_pair("detroit", seed=0)


class TestMonodromySolve:
    def test_chicago_reaches_degree(self, chicago_start_set):
        assert len(chicago_start_set.solutions) == TARGET_DEGREE[CHICAGO] == 312
        assert chicago_start_set.complete

    def test_cleveland_reaches_degree(self, cleveland_start_set):
        assert len(cleveland_start_set.solutions) == TARGET_DEGREE[CLEVELAND] == 216
        assert cleveland_start_set.complete

    def test_solutions_valid_and_separated(self, chicago_start_set):
        system = chicago_start_set.system()
        A = chicago_start_set.params
        sols = chicago_start_set.solutions
        for u in sols[:20]:
            assert np.max(np.abs(system.residual(u, A))) < 1e-10
        normalized = np.array([normalize_blocks(CHICAGO, s) for s in sols])
        min_sep = np.inf
        for i in range(len(sols)):
            d = np.max(np.abs(normalized[i + 1:] - normalized[i]), axis=1)
            if d.size:
                min_sep = min(min_sep, float(np.min(d)))
        assert min_sep > 1e-4

    def test_incomplete_run_flagged(self):
        pair = generate_seed_pair(CLEVELAND, seed=5)
        partial = monodromy_solve(CLEVELAND, pair, seed=6, max_loops=0)
        assert len(partial.solutions) == 1
        assert not partial.complete

    def test_kind_mismatch_rejected(self):
        pair = generate_seed_pair(CLEVELAND, seed=7)
        with pytest.raises(InvalidInputError):
            monodromy_solve(CHICAGO, pair, seed=8)


class TestClosure:
    def test_complete_cleveland_set_closes(self, cleveland_start_set):
        assert verify_closure(cleveland_start_set, seed=11, threads=2)


class TestStartSetFormat:
    def test_round_trip(self, cleveland_start_set):
        text = format_start_set(cleveland_start_set)
        loaded = parse_start_set(text)
        assert loaded.kind == CLEVELAND
        np.testing.assert_array_equal(loaded.params, cleveland_start_set.params)
        for got, want in zip(loaded.charts, cleveland_start_set.charts):
            np.testing.assert_array_equal(got, want)
        np.testing.assert_array_equal(loaded.solutions, cleveland_start_set.solutions)

    def test_header_validated(self):
        with pytest.raises(InvalidInputError):
            parse_start_set("not a startset\n")

    def test_solution_count_validated(self, cleveland_start_set):
        text = format_start_set(cleveland_start_set)
        lines = text.splitlines()
        with pytest.raises(InvalidInputError):
            parse_start_set("\n".join(lines[:-1]) + "\n")

    def test_loaded_set_is_usable(self, cleveland_start_set):
        loaded = parse_start_set(format_start_set(cleveland_start_set))
        system = loaded.system()
        r = system.residual(loaded.solutions[0], loaded.params)
        assert np.max(np.abs(r)) < 1e-10

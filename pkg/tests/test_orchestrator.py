import json
import math
import os

import numpy as np
import pytest

from src.lab.errors import ConfigError, MissingArtifactError
from src.lab.orchestrator import (ANALYSIS_FILE, COVERING_FILE, FIELD_FILE, SAMPLES_FILE, SOLVE_REPORT_FILE,
                                  SUMMARY_JSON, SUMMARY_TEXT, RunConfig, jsonable, run_cover, run_pipeline,
                                  run_report, run_solve)

ORACLE_GRID = {'kind': 'disk', 'center': [0.0, 0.0], 'radius': 1.0, 'spacing': 1.0 / 64}


def oracle_run(output_dir):
    return RunConfig.from_dict({
        'oracle': {'m': 3, 'grid': ORACLE_GRID},
        'output_dir': str(output_dir),
        'radii': {'r_min_cells': 8, 'r_max': 0.25, 'count': 4},
        'detection': {'wall_stride': 16, 'profile_walls': 2},
        'covering': {'r': 0.25, 'terminal_scale': 0.07, 'delta': 0.1},
    })


class TestRunConfig:
    def test_oracle_run_skips_solve(self, tmp_path):
        config = oracle_run(tmp_path)
        assert config.stages == ['analyze', 'cover', 'report']
        assert config.solver is None

    def test_unknown_stage(self):
        with pytest.raises(ConfigError) as err:
            RunConfig.from_dict({'stages': ['solve', 'plot'], 'solver': {'N': 2, 'grid': ORACLE_GRID}})
        assert err.value.field == 'stages'

    def test_stage_order(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({'stages': ['analyze', 'solve'], 'solver': {'N': 2, 'grid': ORACLE_GRID}})

    def test_oracle_cannot_be_solved(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({'stages': ['solve'], 'oracle': {'m': 3, 'grid': ORACLE_GRID}})

    def test_solver_required(self):
        with pytest.raises(ConfigError) as err:
            RunConfig.from_dict({'stages': ['analyze']})
        assert err.value.field == 'solver'

    def test_command_line_overrides(self):
        config = RunConfig.from_dict({'seed': 1, 'solver': {'N': 2, 'grid': ORACLE_GRID}},
                                     seed=9, threads=2, output_dir='elsewhere')
        assert config.seed == 9 and config.solver.seed == 9
        assert config.solver.threads == 2
        assert config.output_dir == 'elsewhere'

    def test_covering_fit_needs_five_radii(self):
        with pytest.raises(ConfigError):
            RunConfig.from_dict({'oracle': {'m': 3, 'grid': ORACLE_GRID}, 'covering': {'tube_count': 3}})


class TestJsonable:
    def test_non_finite_values_become_null(self):
        data = {'a': float('nan'), 'b': [np.float64(np.inf), np.int64(3)], 'c': np.array([1.5, 2.0]),
                'd': np.bool_(True)}
        assert jsonable(data) == {'a': None, 'b': [None, 3], 'c': [1.5, 2.0], 'd': True}


class TestStages:
    def test_oracle_pipeline(self, tmp_path):
        config = oracle_run(tmp_path)
        results = run_pipeline(config)
        assert [r.stage for r in results] == ['analyze', 'cover', 'report']
        assert all(r.exit_code == 0 for r in results)
        for name in (SAMPLES_FILE, ANALYSIS_FILE, COVERING_FILE, SUMMARY_JSON, SUMMARY_TEXT):
            assert os.path.exists(tmp_path / name)

        summary = json.loads((tmp_path / SUMMARY_JSON).read_text())
        assert summary['junction_count'] == 1
        assert summary['junctions'][0]['order'] == pytest.approx(1.5, abs=0.1)
        assert summary['sources']['junctions'].startswith(SAMPLES_FILE)
        covering = json.loads((tmp_path / COVERING_FILE).read_text())
        assert covering['status'] == 'ok'
        assert covering['covering']['covers_input']

    def test_outputs_are_reproducible(self, tmp_path):
        first, second = tmp_path / 'a', tmp_path / 'b'
        run_pipeline(oracle_run(first))
        run_pipeline(oracle_run(second))
        for name in (SAMPLES_FILE, ANALYSIS_FILE, COVERING_FILE, SUMMARY_JSON):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_report_without_analysis(self, tmp_path):
        config = RunConfig.from_dict({'stages': ['report'], 'oracle': {'m': 3, 'grid': ORACLE_GRID},
                                      'output_dir': str(tmp_path)})
        with pytest.raises(MissingArtifactError) as err:
            run_report(config)
        assert err.value.exit_code == 3

    def test_cover_needs_a_field_dump(self, tmp_path):
        config = RunConfig.from_dict({'stages': ['cover'], 'solver': {'N': 2, 'grid': ORACLE_GRID},
                                      'output_dir': str(tmp_path)})
        with pytest.raises(MissingArtifactError):
            run_cover(config)

    def test_solve_stage_reports_non_convergence(self, tmp_path):
        grid = {'kind': 'disk', 'center': [0.0, 0.0], 'radius': 1.0, 'spacing': 1.0 / 16}
        config = RunConfig.from_dict({'stages': ['solve'], 'solver': {'N': 2, 'grid': grid, 'max_iters': 2},
                                      'output_dir': str(tmp_path)})
        result = run_solve(config)
        assert result.exit_code == 2
        assert os.path.exists(tmp_path / FIELD_FILE)
        report = json.loads((tmp_path / SOLVE_REPORT_FILE).read_text())
        assert 'wall_time' not in report
        assert not report['converged']
        assert {a['kind'] for a in result.artifacts} == {'field', 'solve_report'}
        assert not math.isnan(result.metrics['objective'])

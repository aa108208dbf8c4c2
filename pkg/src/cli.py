"""
partition-lab command line.

Exit codes: 0 success, 1 usage or configuration error, 2 solver did not
converge, 3 missing upstream artifact.

Usable as ``python -m src.cli ...`` or through Flask as ``flask --app src.main lab ...``.
"""

import functools
import json
import logging
import os
import sys
from typing import Callable, Dict, List, Optional

import click
import numpy as np
from flask import has_app_context

from src.lab.errors import ConfigError, LabError
from src.lab.field_core import Grid, OracleSpec, make_oracle
from src.lab.field_io import read_field, write_field
from src.lab.frequency import CSV_COLUMNS, admissible_radii, frequency_profile, geometric_radii
from src.lab.mean_flatness import PointMeasure, mean_flatness
from src.lab.orchestrator import (FIELD_FILE, STAGE_RUNNERS, RunConfig, StageResult, jsonable,
                                  run_analyze, run_cover, run_report, run_solve, write_csv, write_json)
from src.lab.singular_set import detect, extract_interface

logger = logging.getLogger(__name__)

DEFAULT_SPACING = 1.0 / 64


class LedgerSession:
    """Records CLI stages in the run ledger when an application context is available"""

    def __init__(self, enabled: bool):
        self.enabled = enabled
        self._context = None
        self.ledger = None

    def __enter__(self):
        if not self.enabled:
            return self
        try:
            from src.ledger import RunLedger
            if not has_app_context():
                from src.main import create_app
                self._context = create_app().app_context()
                self._context.push()
            self.ledger = RunLedger(origin='cli')
        except Exception as e:
            logger.warning(f"Run ledger unavailable, continuing without it: {e}")
            self.ledger = None
        return self

    def __exit__(self, *exc):
        if self._context is not None:
            self._context.pop()
        return False

    def execute(self, stage: str, config: Dict, seed: int, fn: Callable[[], StageResult]) -> StageResult:
        run = self.ledger.start_run(stage, config, seed) if self.ledger else None
        try:
            result = fn()
        except LabError as e:
            if self.ledger:
                self.ledger.fail_run(run, e, e.exit_code)
            raise
        if self.ledger:
            self.ledger.record_result(run, result)
        return result


def common_options(fn):
    @click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
                  help='JSON run configuration')
    @click.option('--seed', type=int, default=None, help='RNG seed (overrides the config)')
    @click.option('--threads', type=int, default=None, help='Cap on parallel workers')
    @click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=None, help='Output directory')
    @click.option('--no-ledger', is_flag=True, default=False, help='Do not record the run in the ledger')
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return fn(*args, **kwargs)
    return wrapper


def field_options(fn):
    @click.option('--field', 'field_path', type=click.Path(dir_okay=False), default=None, help='Field dump')
    @click.option('--oracle', 'oracle_text', default=None, help="Homogeneous oracle, e.g. 'm=3' or 'm=3,rotation=0.2'")
    @click.option('--spacing', type=float, default=DEFAULT_SPACING, show_default=True, help='Oracle grid spacing')
    @click.option('--domain', type=click.Choice(['disk', 'square', 'ball']), default='disk', show_default=True,
                  help='Oracle domain')
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        return fn(*args, **kwargs)
    return wrapper


def parse_oracle(text: str) -> Dict:
    """'m=3,rotation=0.1' -> {'m': 3, 'rotation': 0.1}"""
    values: Dict = {}
    for part in filter(None, (p.strip() for p in text.split(','))):
        if '=' not in part:
            raise ConfigError('oracle', f"expected key=value, got {part!r}")
        key, value = (s.strip() for s in part.split('=', 1))
        values[key] = int(value) if key == 'm' else float(value)
    if 'm' not in values:
        raise ConfigError('oracle.m', 'missing')
    return values


def oracle_grid(domain: str, spacing: float) -> Dict:
    if domain == 'square':
        return {'kind': 'rectangle', 'lower': [-1.0, -1.0], 'upper': [1.0, 1.0], 'spacing': spacing}
    if domain == 'ball':
        return {'kind': 'ball', 'center': [0.0, 0.0, 0.0], 'radius': 1.0, 'spacing': spacing}
    return {'kind': 'disk', 'center': [0.0, 0.0], 'radius': 1.0, 'spacing': spacing}


def resolve_field(field_path: Optional[str], oracle_text: Optional[str], spacing: float, domain: str):
    if oracle_text:
        return make_oracle(Grid.from_spec(oracle_grid(domain, spacing)), OracleSpec.from_dict(parse_oracle(oracle_text)))
    if not field_path:
        raise ConfigError('field', 'give --field PATH or --oracle m=...')
    return read_field(field_path)


def load_config_file(path: Optional[str]) -> Dict:
    if not path:
        raise ConfigError('config', 'missing --config PATH')
    if not os.path.exists(path):
        raise ConfigError('config', f'file not found: {path}')
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError('config', f'invalid JSON in {path}: {e}')


def run_config(config_path, seed, threads, out_dir, data: Optional[Dict] = None,
               stages: Optional[List[str]] = None) -> RunConfig:
    data = dict(data if data is not None else load_config_file(config_path))
    if 'solver' not in data and 'oracle' not in data and 'grid' in data:
        # a bare solver config
        data = {'solver': data}
    if stages is not None:
        data['stages'] = stages
    return RunConfig.from_dict(data, seed=seed, threads=threads, output_dir=out_dir)


def emit(payload) -> None:
    click.echo(json.dumps(jsonable(payload), sort_keys=True, indent=2))


def guarded(fn):
    """Map lab errors to the exit-code contract"""
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            code = fn(*args, **kwargs)
        except LabError as e:
            click.echo(f'error: {e}', err=True)
            sys.exit(e.exit_code)
        sys.exit(code or 0)
    return wrapper


def run_stages(config: RunConfig, no_ledger: bool, runners: Dict[str, Callable[[], StageResult]]) -> int:
    code = 0
    with LedgerSession(not no_ledger) as session:
        for stage, runner in runners.items():
            result = session.execute(stage, config.to_dict(), config.seed, runner)
            click.echo(f"{stage}: exit {result.exit_code}, "
                       f"{len(result.artifacts)} artifacts in {config.output_dir}")
            code = max(code, result.exit_code)
    return code


@click.group(name='lab')
@click.option('--log-level', default=None, help='Logging level (defaults to LOG_LEVEL or INFO)')
def lab(log_level):
    """Optimal partition laboratory: solve, analyze, cover and report."""
    level = (log_level or os.environ.get('LOG_LEVEL', 'INFO')).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


@lab.command()
@common_options
@guarded
def solve(config_path, seed, threads, out_dir, no_ledger):
    """Solve the optimal partition problem and write the field dump."""
    config = run_config(config_path, seed, threads, out_dir, stages=['solve'])
    return run_stages(config, no_ledger, {'solve': lambda: run_solve(config)})


@lab.command()
@common_options
@click.option('--oracle', 'oracle_text', default=None, help="Analyze an oracle instead of a solved field, e.g. 'm=3'")
@click.option('--spacing', type=float, default=DEFAULT_SPACING, show_default=True)
@click.option('--domain', type=click.Choice(['disk', 'square', 'ball']), default='disk', show_default=True)
@guarded
def analyze(config_path, seed, threads, out_dir, no_ledger, oracle_text, spacing, domain):
    """Detect the singular set and write frequency profiles and identity checks."""
    if oracle_text:
        data = load_config_file(config_path) if config_path else {}
        data.pop('solver', None)
        oracle = parse_oracle(oracle_text)
        oracle['grid'] = oracle_grid(domain, spacing)
        data['oracle'] = oracle
        config = run_config(None, seed, threads, out_dir or data.get('output_dir', 'runs/oracle'), data, ['analyze'])
    else:
        config = run_config(config_path, seed, threads, out_dir, stages=['analyze'])
    return run_stages(config, no_ledger, {'analyze': lambda: run_analyze(config)})


@lab.command()
@common_options
@field_options
@click.option('--center', required=True, help='Comma-separated coordinates')
@click.option('--radii', default=None, help='Comma-separated radii (default: 8h to 0.25, 12 geometric steps)')
@click.option('--additive', 'A', type=float, default=0.0, show_default=True, help='Additive correction A')
@guarded
def frequency(config_path, seed, threads, out_dir, no_ledger, field_path, oracle_text, spacing, domain,
              center, radii, A):
    """Frequency profile at one point as CSV."""
    u = resolve_field(field_path, oracle_text, spacing, domain)
    x = np.array([float(c) for c in center.split(',')])
    wanted = ([float(r) for r in radii.split(',')] if radii
              else geometric_radii(8 * u.grid.spacing, 0.25, 12))
    usable, skipped = admissible_radii(u, x, sorted(wanted))
    for r in skipped:
        click.echo(f'warning: radius {r:g} is not admissible at {x.tolist()}, skipped', err=True)
    if not usable:
        raise ConfigError('radii', 'no admissible radius')
    profile = frequency_profile(u, x, usable, A, threads=threads or 1)
    rows = [record.to_row() for record in profile.records]
    columns = [f'x{i}' for i in range(u.dim)] + CSV_COLUMNS + ['flags']
    if out_dir:
        write_csv(os.path.join(out_dir, 'frequency.csv'), rows, columns, 'frequency')
        click.echo(f"lambda_hat={profile.lambda_hat:.6g} additive_hat={profile.additive_hat:.6g}")
    else:
        click.echo(','.join(columns))
        for row in rows:
            click.echo(','.join('' if row.get(c) is None else str(row.get(c)) for c in columns))
    return 0


@lab.command(name='detect')
@common_options
@field_options
@click.option('--junction-radius-cells', type=float, default=2.0, show_default=True)
@click.option('--wall-stride', type=int, default=8, show_default=True)
@click.option('--interface-csv', is_flag=True, default=False, help='Also write interface cells as CSV')
@guarded
def detect_command(config_path, seed, threads, out_dir, no_ledger, field_path, oracle_text, spacing, domain,
                   junction_radius_cells, wall_stride, interface_csv):
    """Classified singular samples as JSON."""
    u = resolve_field(field_path, oracle_text, spacing, domain)
    result = detect(u, junction_radius_cells * u.grid.spacing, wall_stride)
    if out_dir:
        write_json(os.path.join(out_dir, 'samples.json'), result.to_dict(), 'samples')
        if interface_csv:
            rows = []
            for cell in extract_interface(u):
                row = {f'x{i}': c for i, c in enumerate(cell.center)}
                row['labels'] = ';'.join(str(label) for label in cell.labels)
                rows.append(row)
            write_csv(os.path.join(out_dir, 'interface.csv'), rows,
                      [f'x{i}' for i in range(u.dim)] + ['labels'], 'interface')
        click.echo(f"{len(result.junctions)} junctions, {len(result.walls)} wall samples")
    else:
        emit([s.to_dict() for s in result.samples])
    return 0


@lab.command()
@common_options
@click.option('--atoms', 'atoms_path', required=True, type=click.Path(dir_okay=False), help='JSON point measure')
@click.option('--center', required=True, help='Comma-separated coordinates')
@click.option('--radius', 'radii', type=float, multiple=True, required=True, help='Ball radius (repeatable)')
@click.option('--k', type=int, default=None, help='Plane dimension (default n-2)')
@guarded
def flatness(config_path, seed, threads, out_dir, no_ledger, atoms_path, center, radii, k):
    """Mean flatness records of a point measure as CSV."""
    mu = PointMeasure.from_dict(load_config_file(atoms_path))
    x = [float(c) for c in center.split(',')]
    dim_k = max(mu.dim - 2, 0) if k is None else k
    rows = [mean_flatness(mu, x, r, dim_k).to_row() for r in radii]
    columns = ['radius', 'k', 'mass', 'value'] + [f'x{i}' for i in range(mu.dim)] + \
              [f'xi{i + 1}' for i in range(mu.dim)]
    if out_dir:
        write_csv(os.path.join(out_dir, 'flatness.csv'), rows, columns, 'flatness')
    else:
        click.echo(','.join(columns))
        for row in rows:
            click.echo(','.join(str(row[c]) for c in columns))
    return 0


@lab.command()
@common_options
@click.option('--points', 'points_path', type=click.Path(dir_okay=False), default=None,
              help='Singular samples JSON (default: samples.json in the output directory)')
@click.option('--rho', type=float, default=None, help='Radius ratio between generations')
@click.option('--delta', type=float, default=None, help='Frequency drop')
@click.option('--terminal-scale', type=float, default=None, help='Terminal radius s')
@guarded
def cover(config_path, seed, threads, out_dir, no_ledger, points_path, rho, delta, terminal_scale):
    """Covering and tube-volume curves of the detected junctions."""
    data = load_config_file(config_path)
    overrides = {'rho': rho, 'delta': delta, 'terminal_scale': terminal_scale}
    covering = dict(data.get('covering', {}))
    covering.update({k: v for k, v in overrides.items() if v is not None})
    data['covering'] = covering
    stages = ['cover']
    config = run_config(None, seed, threads, out_dir, data, stages)
    return run_stages(config, no_ledger, {'cover': lambda: run_cover(config, points_path)})


@lab.command()
@common_options
@guarded
def report(config_path, seed, threads, out_dir, no_ledger):
    """Summary JSON and text from the analysis artifacts."""
    data = load_config_file(config_path)
    config = run_config(None, seed, threads, out_dir, data, [s for s in data.get('stages', ['report'])
                                                             if s in ('cover', 'report')] or ['report'])
    return run_stages(config, no_ledger, {'report': lambda: run_report(config)})


@lab.command()
@common_options
@click.option('--m', 'm', type=int, required=True, help='Number of nodal sectors')
@click.option('--rotation', type=float, default=0.0, show_default=True)
@click.option('--spacing', type=float, default=DEFAULT_SPACING, show_default=True)
@click.option('--domain', type=click.Choice(['disk', 'square', 'ball']), default='disk', show_default=True)
@guarded
def oracle(config_path, seed, threads, out_dir, no_ledger, m, rotation, spacing, domain):
    """Write the homogeneous oracle field as a dump."""
    grid = Grid.from_spec(oracle_grid(domain, spacing))
    u = make_oracle(grid, OracleSpec(m, rotation))
    path = os.path.join(out_dir or 'runs/oracle', FIELD_FILE)
    try:
        digest = write_field(u, path)
    except OSError as e:
        raise LabError(f'cannot write {path}: {e}')
    emit({'path': path, 'sha256': digest, 'norms': u.l2_norms(), 'grid': grid.describe()})
    return 0


@lab.command(name='run')
@common_options
@guarded
def run_all(config_path, seed, threads, out_dir, no_ledger):
    """Every stage listed in the configuration, in order."""
    config = run_config(config_path, seed, threads, out_dir)
    runners = {stage: functools.partial(STAGE_RUNNERS[stage], config) for stage in config.stages}
    return run_stages(config, no_ledger, runners)


def main():
    try:
        lab.main(prog_name='partition-lab', standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(1)
    except click.ClickException as e:
        e.show()
        sys.exit(1)


if __name__ == '__main__':
    main()

"""
Pipeline stages: solve, analyze, cover, report.

Every stage reads its inputs from and writes its artifacts to the run's
output directory. JSON artifacts are written with sorted keys and no timing
data so identical configs and seeds give byte-identical files.
"""

import csv
import hashlib
import io
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.lab.covering import (inductive_cover, local_minkowski_constant,
                              minkowski_content, reifenberg_integral, tube_volume_curve)
from src.lab.errors import AdmissibilityError, ConfigError, LabError, MissingArtifactError
from src.lab.field_core import Grid, OracleSpec, SegregatedField, make_oracle
from src.lab.field_io import read_field, write_field
from src.lab.frequency import (CSV_COLUMNS, admissible_radii, comparison_constant, frequency_profile,
                               geometric_radii, identity_suite, scale_restriction)
from src.lab.mean_flatness import PointMeasure
from src.lab.partition_solver import SolveConfig, extremality_check, pde_residual, solve_partition
from src.lab.singular_set import JUNCTION, SingularSample, clearing_sweep, detect, extract_interface

logger = logging.getLogger(__name__)

STAGES = ['solve', 'analyze', 'cover', 'report']

FIELD_FILE = 'field.field'
SOLVE_REPORT_FILE = 'solve_report.json'
FREQUENCY_FILE = 'frequency.csv'
SAMPLES_FILE = 'samples.json'
IDENTITIES_FILE = 'identities.json'
ANALYSIS_FILE = 'analysis.json'
COVERING_FILE = 'covering.json'
MINKOWSKI_FILE = 'minkowski.csv'
SUMMARY_JSON = 'summary.json'
SUMMARY_TEXT = 'summary.txt'

EXIT_OK = 0
EXIT_NOT_CONVERGED = 2


@dataclass
class RadiiSpec:
    r_min_cells: float = 8.0
    r_max: float = 0.25
    count: int = 12
    values: Optional[List[float]] = None

    @classmethod
    def from_dict(cls, data: Dict) -> 'RadiiSpec':
        spec = cls(float(data.get('r_min_cells', 8.0)), float(data.get('r_max', 0.25)),
                   int(data.get('count', 12)), data.get('values'))
        if spec.count < 1:
            raise ConfigError('radii.count', 'must be at least 1')
        if spec.r_min_cells <= 0 or spec.r_max <= 0:
            raise ConfigError('radii.r_max', 'radii must be positive')
        return spec

    def radii(self, h: float) -> List[float]:
        if self.values:
            return sorted(float(v) for v in self.values)
        return geometric_radii(self.r_min_cells * h, self.r_max, self.count)

    def to_dict(self) -> Dict:
        return {'r_min_cells': self.r_min_cells, 'r_max': self.r_max, 'count': self.count,
                'values': self.values}


@dataclass
class DetectionSpec:
    junction_radius_cells: float = 2.0
    wall_stride: int = 8
    margin_cells: int = 16
    clearing_eps: float = 0.2
    profile_walls: int = 4

    @classmethod
    def from_dict(cls, data: Dict) -> 'DetectionSpec':
        known = set(cls.__dataclass_fields__)
        spec = cls(**{k: v for k, v in data.items() if k in known})
        if spec.junction_radius_cells < 2:
            raise ConfigError('detection.junction_radius_cells', 'must be at least 2')
        if spec.wall_stride < 1:
            raise ConfigError('detection.wall_stride', 'must be at least 1')
        return spec

    def to_dict(self) -> Dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class CoveringSpec:
    r: float = 0.25
    terminal_scale: float = 0.01
    delta: float = 0.1
    rho: float = 0.25
    A: float = 0.0
    budget: int = 500
    tube_max: float = 0.1
    tube_count: int = 8

    @classmethod
    def from_dict(cls, data: Dict) -> 'CoveringSpec':
        known = set(cls.__dataclass_fields__)
        spec = cls(**{k: v for k, v in data.items() if k in known})
        if not 0 < spec.terminal_scale < spec.r:
            raise ConfigError('covering.terminal_scale', 'need 0 < terminal_scale < r')
        if spec.delta <= 0:
            raise ConfigError('covering.delta', 'must be positive')
        if not 0 < spec.rho < 1:
            raise ConfigError('covering.rho', 'must lie in (0, 1)')
        if spec.tube_count < 5:
            raise ConfigError('covering.tube_count', 'the scaling fit needs at least 5 radii')
        return spec

    def to_dict(self) -> Dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class OracleConfig:
    spec: OracleSpec
    grid: Dict

    @classmethod
    def from_dict(cls, data: Dict) -> 'OracleConfig':
        if 'grid' not in data:
            raise ConfigError('oracle.grid', 'missing')
        return cls(OracleSpec.from_dict(data), dict(data['grid']))

    def to_dict(self) -> Dict:
        out = self.spec.to_dict()
        out['grid'] = self.grid
        return out


@dataclass
class RunConfig:
    stages: List[str]
    output_dir: str
    solver: Optional[SolveConfig] = None
    oracle: Optional[OracleConfig] = None
    radii: RadiiSpec = field(default_factory=RadiiSpec)
    detection: DetectionSpec = field(default_factory=DetectionSpec)
    covering: CoveringSpec = field(default_factory=CoveringSpec)
    seed: int = 0
    threads: int = 1

    @classmethod
    def from_dict(cls, data: Dict, seed: Optional[int] = None, threads: Optional[int] = None,
                  output_dir: Optional[str] = None) -> 'RunConfig':
        """Command-line values for seed, threads and output_dir override the file"""
        oracle = OracleConfig.from_dict(data['oracle']) if data.get('oracle') else None
        default_stages = STAGES[1:] if oracle else STAGES
        stages = list(data.get('stages', default_stages))
        unknown = [s for s in stages if s not in STAGES]
        if unknown:
            raise ConfigError('stages', f'unknown stages {unknown}; expected a subset of {STAGES}')
        if len(set(stages)) != len(stages) or stages != sorted(stages, key=STAGES.index):
            raise ConfigError('stages', f'stages must follow the order {STAGES} without repeats')
        if oracle and 'solve' in stages:
            raise ConfigError('stages', 'an oracle run has no solve stage')

        seed = int(seed if seed is not None else data.get('seed', data.get('solver', {}).get('seed', 0)))
        threads = int(threads if threads is not None else data.get('threads', 1))
        if threads < 1:
            raise ConfigError('threads', 'must be at least 1')

        solver = None
        if 'solver' in data:
            solver_data = dict(data['solver'])
            solver_data['seed'] = seed
            solver_data['threads'] = threads
            solver = SolveConfig.from_dict(solver_data)
        elif not oracle:
            raise ConfigError('solver', 'missing (needed unless an oracle is given)')

        return cls(
            stages=stages,
            output_dir=output_dir or data.get('output_dir', 'runs/default'),
            solver=solver,
            oracle=oracle,
            radii=RadiiSpec.from_dict(data.get('radii', {})),
            detection=DetectionSpec.from_dict(data.get('detection', {})),
            covering=CoveringSpec.from_dict(data.get('covering', {})),
            seed=seed,
            threads=threads,
        )

    def to_dict(self) -> Dict:
        return {
            'stages': self.stages,
            'output_dir': self.output_dir,
            'solver': self.solver.to_dict() if self.solver else None,
            'oracle': self.oracle.to_dict() if self.oracle else None,
            'radii': self.radii.to_dict(),
            'detection': self.detection.to_dict(),
            'covering': self.covering.to_dict(),
            'seed': self.seed,
            'threads': self.threads,
        }

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)


@dataclass
class StageResult:
    stage: str
    exit_code: int
    artifacts: List[Dict] = field(default_factory=list)
    inputs: List[str] = field(default_factory=list)
    metrics: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {'stage': self.stage, 'exit_code': self.exit_code, 'artifacts': self.artifacts,
                'inputs': self.inputs, 'metrics': self.metrics}


# Serialization helpers

def jsonable(value):
    """Replace NaN and infinities by None and numpy scalars by Python ones"""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def _artifact(kind: str, path: str, blob: bytes) -> Dict:
    return {'kind': kind, 'path': path, 'sha256': hashlib.sha256(blob).hexdigest(), 'size': len(blob)}


def _write_bytes(path: str, blob: bytes):
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'wb') as fh:
            fh.write(blob)
    except OSError as e:
        raise LabError(f'cannot write {path}: {e}')


def write_json(path: str, data, kind: str) -> Dict:
    blob = (json.dumps(jsonable(data), sort_keys=True, indent=2) + '\n').encode('utf-8')
    _write_bytes(path, blob)
    return _artifact(kind, path, blob)


def write_csv(path: str, rows: Sequence[Dict], columns: Sequence[str], kind: str) -> Dict:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns), extrasaction='ignore', lineterminator='\n')
    writer.writeheader()
    for row in rows:
        writer.writerow({k: ('' if v is None else repr(v) if isinstance(v, float) else v)
                         for k, v in jsonable(row).items()})
    blob = buffer.getvalue().encode('utf-8')
    _write_bytes(path, blob)
    return _artifact(kind, path, blob)


def read_json(path: str) -> Dict:
    if not os.path.exists(path):
        raise MissingArtifactError(f'missing artifact {path}')
    with open(path) as fh:
        return json.load(fh)


def file_sha256(path: str) -> str:
    with open(path, 'rb') as fh:
        return hashlib.sha256(fh.read()).hexdigest()


# Field loading

def oracle_center(oracle: OracleConfig, grid: Grid) -> np.ndarray:
    if oracle.spec.center is not None:
        return np.asarray(oracle.spec.center, dtype=float)
    return grid.points_of(grid.domain_mask).mean(axis=0)


def load_field(config: RunConfig) -> Tuple[SegregatedField, List[str]]:
    """(field, input hashes); oracle runs build the field in memory"""
    if config.oracle:
        grid = Grid.from_spec(config.oracle.grid)
        return make_oracle(grid, config.oracle.spec), []
    path = config.path(FIELD_FILE)
    if not os.path.exists(path):
        raise MissingArtifactError(f'field dump {path} not found; run the solve stage first')
    return read_field(path), [file_sha256(path)]


# Stages

def run_solve(config: RunConfig) -> StageResult:
    if config.solver is None:
        raise ConfigError('solver', 'missing')
    logger.info(f"Solve stage: N={config.solver.n_components}, seed={config.seed}, out={config.output_dir}")
    u, report = solve_partition(config.solver)
    path = config.path(FIELD_FILE)
    try:
        digest = write_field(u, path)
    except OSError as e:
        raise LabError(f'cannot write {path}: {e}')
    with open(path, 'rb') as fh:
        size = len(fh.read())
    artifacts = [{'kind': 'field', 'path': path, 'sha256': digest, 'size': size}]
    artifacts.append(write_json(config.path(SOLVE_REPORT_FILE), report.to_dict(include_timing=False),
                                'solve_report'))
    logger.info(f"Solve finished in {report.wall_time:.1f}s, objective {report.objective:.6f}")
    exit_code = EXIT_OK
    if not report.converged:
        logger.warning(f"Solver stopped at max_iters={config.solver.max_iters} without converging")
        exit_code = EXIT_NOT_CONVERGED
    return StageResult('solve', exit_code, artifacts,
                       metrics={'objective': report.objective, 'iterations': report.iterations,
                                'converged': report.converged})


def analysis_points(u: SegregatedField, config: RunConfig, samples: Sequence[SingularSample]) -> List[Dict]:
    """Centers profiled by the analysis: oracle center, junctions and a few walls"""
    points = []
    if config.oracle:
        center = oracle_center(config.oracle, u.grid)
        points.append({'kind': 'oracle_center', 'location': center.tolist()})
    points.extend({'kind': 'junction', 'location': list(s.location)}
                  for s in samples if s.classification == JUNCTION)
    walls = [s for s in samples if s.classification != JUNCTION]
    points.extend({'kind': 'wall', 'location': list(s.location)}
                  for s in walls[:config.detection.profile_walls])
    return points


def run_analyze(config: RunConfig) -> StageResult:
    u, inputs = load_field(config)
    h = u.grid.spacing
    det = config.detection
    detection = detect(u, det.junction_radius_cells * h, det.wall_stride, det.margin_cells)
    artifacts = [write_json(config.path(SAMPLES_FILE), detection.to_dict(), 'samples')]

    radii = config.radii.radii(h)
    rows, profiles, identities, warnings = [], [], [], []
    for index, point in enumerate(analysis_points(u, config, detection.samples)):
        x = np.asarray(point['location'])
        usable, skipped = admissible_radii(u, x, radii)
        for r in skipped:
            message = f'radius {r:g} skipped at point {index} ({point["kind"]}): not admissible'
            logger.warning(message)
            warnings.append(message)
        if not usable:
            continue
        profile = frequency_profile(u, x, usable, threads=config.threads)
        warnings.extend(profile.warnings)
        for record in profile.records:
            row = record.to_row()
            row.update({'point': index, 'kind': point['kind']})
            rows.append(row)
        profiles.append({'point': index, 'kind': point['kind'], 'location': point['location'],
                         'lambda_hat': profile.lambda_hat, 'additive_hat': profile.additive_hat,
                         'monotonicity': profile.monotonicity.to_dict()})
        middle = usable[len(usable) // 2]
        try:
            report = identity_suite(u, x, middle)
            entry = report.to_dict()
            entry.update({'point': index, 'kind': point['kind']})
            identities.append(entry)
        except AdmissibilityError as e:
            logger.warning(f"No identity check at point {index}: {e}")

    coord_columns = [f'x{i}' for i in range(u.dim)]
    artifacts.append(write_csv(config.path(FREQUENCY_FILE), rows,
                               ['point', 'kind'] + coord_columns + CSV_COLUMNS + ['flags'], 'frequency'))
    artifacts.append(write_json(config.path(IDENTITIES_FILE), {'reports': identities}, 'identities'))

    zero_set = [p['location'] for p in profiles if p['kind'] != 'oracle_center'] or \
               [p['location'] for p in profiles]
    comparison = comparison_constant(u, zero_set, [r for r in radii if r >= 8 * h])
    sweep = clearing_sweep(u, [c.center for c in extract_interface(u)[::max(det.wall_stride, 1)]]
                           + [s.location for s in detection.samples],
                           radii[0], det.clearing_eps)
    lambda_hats = [p['lambda_hat'] for p in profiles]
    analysis = {
        'profiles': profiles,
        'lambda_hat': max(lambda_hats) if lambda_hats else None,
        'additive_hat': max((p['additive_hat'] for p in profiles), default=None),
        'comparison_constant': comparison.to_dict(),
        'clearing': {'eps': det.clearing_eps, 'radius': radii[0], 'checked': len(sweep.reports),
                     'violations': sweep.violations, 'epsilon_hat': sweep.threshold_estimate},
        'monotonicity_violations': {
            'generalized': sum(p['monotonicity']['generalized_violations'] for p in profiles),
            'multiplicative': sum(p['monotonicity']['multiplicative_violations'] for p in profiles),
            'additive': sum(p['monotonicity']['additive_violations'] for p in profiles),
        },
        'scale_restriction': scale_restriction(u).to_dict(),
        'radii': radii,
        'warnings': warnings,
    }
    if not config.oracle:
        analysis['pde_residuals'] = pde_residual(u)
        analysis['extremality'] = extremality_check(u).to_dict()
    artifacts.append(write_json(config.path(ANALYSIS_FILE), analysis, 'analysis'))
    logger.info(f"Analysis wrote {len(rows)} frequency rows for {len(profiles)} points")
    return StageResult('analyze', EXIT_OK, artifacts, inputs,
                       metrics={'junctions': len(detection.junctions), 'walls': len(detection.walls),
                                'lambda_hat': analysis['lambda_hat']})


def _tube_radii(h: float, spec: CoveringSpec) -> List[float]:
    return [float(r) for r in np.geomspace(2 * h, max(spec.tube_max, 4 * h), spec.tube_count)]


def _curve_summary(curve, codim: int, r: float, n: int) -> Dict:
    return {
        'rhos': curve.rhos,
        'volumes': curve.volumes,
        'slope': curve.slope,
        'confidence': curve.confidence,
        'minkowski_content': minkowski_content(curve, codim),
        'local_constant': local_minkowski_constant(curve, r, n),
    }


def run_cover(config: RunConfig, samples_path: Optional[str] = None) -> StageResult:
    u, inputs = load_field(config)
    samples_path = samples_path or config.path(SAMPLES_FILE)
    samples = [SingularSample.from_dict(s) for s in read_json(samples_path)['samples']]
    inputs.append(file_sha256(samples_path))
    spec = config.covering
    h = u.grid.spacing
    n = u.dim
    rhos = _tube_radii(h, spec)

    junctions = [s.location for s in samples if s.classification == JUNCTION]
    interface = [c.center for c in extract_interface(u)]
    interface_curve = tube_volume_curve(interface, u.grid, rhos) if interface else None

    result: Dict = {'junction_count': len(junctions), 'tube_radii': rhos}
    rows = [{'rho': r} for r in rhos]
    if interface_curve is not None:
        result['interface_tube'] = _curve_summary(interface_curve, 1, spec.r, n)
        for row, v in zip(rows, interface_curve.volumes):
            row['interface_volume'] = v

    if junctions:
        curve = tube_volume_curve(junctions, u.grid, rhos)
        result['junction_tube'] = _curve_summary(curve, 2, spec.r, n)
        for row, v in zip(rows, curve.volumes):
            row['junction_volume'] = v
        covering = inductive_cover(u, junctions, spec.r, spec.terminal_scale, spec.delta, spec.A,
                                   spec.rho, spec.budget)
        result['covering'] = covering.to_dict()
        result['covering']['covers_input'] = covering.covers(junctions)
        result['covering']['vitali'] = covering.vitali_disjoint()
        mu = PointMeasure.from_points(junctions)
        center = np.mean(np.asarray(junctions), axis=0)
        result['reifenberg_integral'] = reifenberg_integral(mu, center, spec.r, max(n - 2, 0))
        result['status'] = 'ok'
    else:
        logger.info("No junctions detected; covering skipped")
        result['status'] = 'empty set'

    artifacts = [
        write_json(config.path(COVERING_FILE), result, 'covering'),
        write_csv(config.path(MINKOWSKI_FILE), rows, ['rho', 'junction_volume', 'interface_volume'], 'minkowski'),
    ]
    return StageResult('cover', EXIT_OK, artifacts, inputs,
                       metrics={'junction_count': len(junctions),
                                'ball_count': result.get('covering', {}).get('ball_count')})


def build_summary(samples: Dict, analysis: Dict, identities: Dict, covering: Optional[Dict]) -> Dict:
    """Summary document; `sources` maps every reported number to its artifact column"""
    junctions = sorted(
        ({'location': s['location'], 'order': s['order'], 'labels': s['labels']}
         for s in samples['samples'] if s['classification'] == JUNCTION),
        key=lambda j: tuple(j['location']),
    )
    residual_max: Dict[str, float] = {}
    for report in identities.get('reports', []):
        for name, value in report['residuals'].items():
            if value is not None:
                residual_max[name] = max(residual_max.get(name, 0.0), value)

    if covering is None:
        minkowski = {'status': 'not computed'}
    elif covering.get('status') == 'empty set' or not junctions:
        minkowski = {'status': 'empty set'}
    else:
        tube = covering['junction_tube']
        minkowski = {'status': 'ok', 'slope': tube['slope'], 'confidence': tube['confidence'],
                     'ball_count': covering['covering']['ball_count'],
                     'packing_sum': covering['covering']['packing_sum']}
    if covering and covering.get('interface_tube'):
        minkowski['interface_slope'] = covering['interface_tube']['slope']

    return {
        'junctions': junctions,
        'junction_count': len(junctions),
        'wall_count': samples.get('wall_count', 0),
        'minkowski': minkowski,
        'monotonicity_violations': analysis['monotonicity_violations'],
        'lambda_hat': analysis['lambda_hat'],
        'additive_hat': analysis['additive_hat'],
        'comparison_constant': analysis['comparison_constant']['constant'],
        'epsilon_hat': analysis['clearing']['epsilon_hat'],
        'identity_residual_max': residual_max,
        'sources': {
            'junctions': f'{SAMPLES_FILE}:samples[classification=Junction]',
            'wall_count': f'{SAMPLES_FILE}:wall_count',
            'minkowski.slope': f'{COVERING_FILE}:junction_tube.slope ({MINKOWSKI_FILE}:junction_volume)',
            'minkowski.interface_slope': f'{COVERING_FILE}:interface_tube.slope ({MINKOWSKI_FILE}:interface_volume)',
            'minkowski.ball_count': f'{COVERING_FILE}:covering.ball_count',
            'monotonicity_violations': f'{ANALYSIS_FILE}:monotonicity_violations',
            'lambda_hat': f'{ANALYSIS_FILE}:lambda_hat',
            'additive_hat': f'{ANALYSIS_FILE}:additive_hat',
            'comparison_constant': f'{ANALYSIS_FILE}:comparison_constant.constant',
            'epsilon_hat': f'{ANALYSIS_FILE}:clearing.epsilon_hat',
            'identity_residual_max': f'{IDENTITIES_FILE}:reports[].residuals',
        },
    }


def _fmt(value) -> str:
    if value is None:
        return 'n/a'
    if isinstance(value, float):
        return f'{value:.6g}'
    return str(value)


def summary_text(summary: Dict) -> str:
    lines = ['partition-lab summary', '']
    lines.append(f"junctions: {summary['junction_count']}    wall samples: {summary['wall_count']}")
    for j in summary['junctions']:
        location = ', '.join(f'{c:.4f}' for c in j['location'])
        lines.append(f"  ({location})  order {_fmt(j['order'])}  labels {j['labels']}")
    lines.append('')
    mink = summary['minkowski']
    if mink['status'] == 'ok':
        lines.append(f"minkowski slope: {_fmt(mink['slope'])} +/- {_fmt(mink['confidence'])}  "
                     f"(balls {mink['ball_count']})")
    else:
        lines.append(f"minkowski: {mink['status']}")
    if 'interface_slope' in mink:
        lines.append(f"interface slope: {_fmt(mink['interface_slope'])}")
    lines.append('')
    mono = summary['monotonicity_violations']
    lines.append(f"monotonicity violations: generalized {mono['generalized']}, "
                 f"multiplicative {mono['multiplicative']}, additive {mono['additive']}")
    lines.append(f"lambda_hat {_fmt(summary['lambda_hat'])}  additive_hat {_fmt(summary['additive_hat'])}  "
                 f"comparison {_fmt(summary['comparison_constant'])}  epsilon_hat {_fmt(summary['epsilon_hat'])}")
    lines.append('identity residual maxima:')
    for name in sorted(summary['identity_residual_max']):
        lines.append(f"  {name}: {_fmt(summary['identity_residual_max'][name])}")
    return '\n'.join(lines) + '\n'


def run_report(config: RunConfig) -> StageResult:
    paths = [config.path(SAMPLES_FILE), config.path(ANALYSIS_FILE), config.path(IDENTITIES_FILE)]
    samples, analysis, identities = (read_json(p) for p in paths)
    covering = None
    if 'cover' in config.stages or os.path.exists(config.path(COVERING_FILE)):
        paths.append(config.path(COVERING_FILE))
        covering = read_json(config.path(COVERING_FILE))
    summary = build_summary(samples, analysis, identities, covering)
    text = summary_text(summary)
    _write_bytes(config.path(SUMMARY_TEXT), text.encode('utf-8'))
    artifacts = [
        write_json(config.path(SUMMARY_JSON), summary, 'summary'),
        _artifact('summary_text', config.path(SUMMARY_TEXT), text.encode('utf-8')),
    ]
    return StageResult('report', EXIT_OK, artifacts, [file_sha256(p) for p in paths],
                       metrics={'junction_count': summary['junction_count']})


STAGE_RUNNERS = {
    'solve': run_solve,
    'analyze': run_analyze,
    'cover': run_cover,
    'report': run_report,
}


def run_pipeline(config: RunConfig, on_stage=None) -> List[StageResult]:
    """
    Runs the configured stages in order. A non-converged solve still feeds
    later stages; the pipeline's exit code is the largest stage exit code.
    on_stage(result) is called after each stage.
    """
    results = []
    for stage in config.stages:
        logger.info(f"Running stage {stage}")
        result = STAGE_RUNNERS[stage](config)
        results.append(result)
        if on_stage is not None:
            on_stage(result)
    return results

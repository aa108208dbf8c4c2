import json

import pytest
from click.testing import CliRunner

from src.cli import lab, parse_oracle
from src.lab.errors import ConfigError


@pytest.fixture
def runner():
    return CliRunner(mix_stderr=False)


def test_parse_oracle():
    assert parse_oracle('m=3, rotation=0.25') == {'m': 3, 'rotation': 0.25}
    with pytest.raises(ConfigError):
        parse_oracle('rotation=0.25')


def test_oracle_dump(runner, tmp_path):
    result = runner.invoke(lab, ['oracle', '--m', '4', '--spacing', '0.0625', '--out', str(tmp_path), '--no-ledger'])
    assert result.exit_code == 0, result.output
    payload = json.loads(result.output)
    assert (tmp_path / 'field.field').exists()
    assert (tmp_path / 'field.json').exists()
    assert len(payload['sha256']) == 64


def test_analyze_oracle(runner, tmp_path):
    result = runner.invoke(lab, ['analyze', '--oracle', 'm=3', '--spacing', '0.03125', '--out', str(tmp_path),
                                 '--no-ledger'])
    assert result.exit_code == 0, result.output
    samples = json.loads((tmp_path / 'samples.json').read_text())
    assert samples['junction_count'] == 1
    assert (tmp_path / 'frequency.csv').read_text().startswith('point,kind,x0,x1,radius')


def test_frequency_to_stdout(runner):
    result = runner.invoke(lab, ['frequency', '--oracle', 'm=2', '--spacing', '0.03125', '--center', '0,0',
                                 '--radii', '0.25,0.5,5.0', '--no-ledger'])
    assert result.exit_code == 0, result.output
    lines = [line for line in result.output.splitlines() if line and not line.startswith('warning')]
    assert lines[0].startswith('x0,x1,radius,D,H')
    assert len(lines) == 3


def test_missing_config_is_a_usage_error(runner, tmp_path):
    result = runner.invoke(lab, ['solve', '--config', str(tmp_path / 'absent.json'), '--no-ledger'])
    assert result.exit_code == 1


def test_report_without_artifacts(runner, tmp_path):
    config = tmp_path / 'oracle.json'
    config.write_text(json.dumps({
        'stages': ['report'],
        'oracle': {'m': 3, 'grid': {'kind': 'disk', 'radius': 1.0, 'spacing': 0.0625}},
    }))
    result = runner.invoke(lab, ['report', '--config', str(config), '--out', str(tmp_path / 'run'), '--no-ledger'])
    assert result.exit_code == 3


def test_flatness(runner, tmp_path):
    atoms = tmp_path / 'atoms.json'
    atoms.write_text(json.dumps({'points': [[0.5, 0.5], [0.5, -0.5], [-0.5, 0.5], [-0.5, -0.5]]}))
    result = runner.invoke(lab, ['flatness', '--atoms', str(atoms), '--center', '0,0', '--radius', '2',
                                 '--radius', '4', '--k', '1', '--no-ledger'])
    assert result.exit_code == 0, result.output
    header, first, second = result.output.strip().splitlines()
    values = [float(line.split(',')[header.split(',').index('value')]) for line in (first, second)]
    assert values == pytest.approx([1 / 8, 1 / 64])


@pytest.mark.parametrize('command', [
    ['frequency', '--center', '0,0'],
    ['detect'],
])
def test_missing_field_dump(runner, tmp_path, command):
    result = runner.invoke(lab, command + ['--field', str(tmp_path / 'absent.field'), '--no-ledger'])
    assert result.exit_code == 3
    assert 'not found' in result.stderr

import hashlib
import json
import logging

import numpy as np
import pytest

from src.lab.errors import FieldFormatError, MissingArtifactError
from src.lab.field_core import Grid, SegregatedField
from src.lab.field_io import MAGIC, decode_field, encode_field, read_field, sidecar_path, write_field


@pytest.fixture
def small_field(rng):
    grid = Grid.disk([0.0, 0.0], 1.0, 1.0 / 8)
    comps = np.abs(rng.normal(size=(2,) + grid.shape))
    return SegregatedField(grid, comps, [3.5, 7.25]).project()


def test_written_dump_reads_back(tmp_path, small_field):
    path = str(tmp_path / 'field.field')
    digest = write_field(small_field, path)

    with open(path, 'rb') as fh:
        assert hashlib.sha256(fh.read()).hexdigest() == digest

    loaded = read_field(path)
    assert np.array_equal(loaded.components, small_field.components)
    assert np.array_equal(loaded.grid.domain_mask, small_field.grid.domain_mask)
    assert loaded.eigenvalues.tolist() == [3.5, 7.25]
    assert loaded.grid.spacing == small_field.grid.spacing


def test_sidecar_mirrors_header(tmp_path, small_field):
    path = str(tmp_path / 'field.field')
    write_field(small_field, path)
    with open(sidecar_path(path)) as fh:
        header = json.load(fh)
    assert header['n_components'] == 2
    assert header['shape'] == list(small_field.grid.shape)


def test_bad_magic(small_field):
    blob = b'NOTFIELD' + encode_field(small_field)[8:]
    with pytest.raises(FieldFormatError, match='magic'):
        decode_field(blob)


def test_truncated_payload(small_field):
    blob = encode_field(small_field)
    assert blob.startswith(MAGIC)
    with pytest.raises(FieldFormatError, match='size mismatch'):
        decode_field(blob[:-8])


def test_sidecar_mismatch(tmp_path, small_field):
    path = str(tmp_path / 'field.field')
    write_field(small_field, path)
    with open(sidecar_path(path)) as fh:
        header = json.load(fh)
    header['eigenvalues'] = [0.0, 0.0]
    with open(sidecar_path(path), 'w') as fh:
        json.dump(header, fh)
    with pytest.raises(FieldFormatError, match='does not match'):
        read_field(path)


def test_missing_sidecar_warns(tmp_path, small_field, caplog):
    path = tmp_path / 'field.field'
    path.write_bytes(encode_field(small_field))
    with caplog.at_level(logging.WARNING, logger='src.lab.field_io'):
        read_field(str(path))
    assert 'No sidecar' in caplog.text


def test_missing_file(tmp_path):
    with pytest.raises(MissingArtifactError, match='not found'):
        read_field(str(tmp_path / 'absent.field'))

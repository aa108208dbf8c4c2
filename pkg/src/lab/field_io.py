"""
Field dump format.

Layout of a ``.field`` file:

    8 bytes   magic ``PLFIELD1``
    4 bytes   little-endian header length
    header    UTF-8 JSON (sorted keys)
    mask      domain mask, np.packbits, row-major
    payload   components as little-endian float64, row-major

A ``.json`` sidecar next to the dump mirrors the header.
"""

import hashlib
import json
import logging
import os
import struct
from typing import Dict, Tuple

import numpy as np

from src.lab.errors import FieldFormatError, MissingArtifactError
from src.lab.field_core import Grid, SegregatedField

logger = logging.getLogger(__name__)

MAGIC = b'PLFIELD1'
FORMAT_VERSION = 1


def field_header(u: SegregatedField) -> Dict:
    return {
        'format_version': FORMAT_VERSION,
        'dim': u.grid.dim,
        'shape': list(u.grid.shape),
        'spacing': u.grid.spacing,
        'origin': list(u.grid.origin),
        'n_components': u.n_components,
        'eigenvalues': [float(v) for v in u.eigenvalues],
        'normalized': bool(u.normalized),
    }


def sidecar_path(path: str) -> str:
    root, _ = os.path.splitext(path)
    return root + '.json'


def encode_field(u: SegregatedField) -> bytes:
    header = json.dumps(field_header(u), sort_keys=True).encode('utf-8')
    mask = np.packbits(u.grid.domain_mask.reshape(-1)).tobytes()
    payload = np.ascontiguousarray(u.components, dtype='<f8').tobytes()
    return MAGIC + struct.pack('<I', len(header)) + header + mask + payload


def decode_field(blob: bytes) -> Tuple[SegregatedField, Dict]:
    if blob[:8] != MAGIC:
        raise FieldFormatError('not a field dump (bad magic)')
    try:
        (length,) = struct.unpack('<I', blob[8:12])
        header = json.loads(blob[12:12 + length].decode('utf-8'))
    except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FieldFormatError(f'unreadable header: {e}')

    for key in ('dim', 'shape', 'spacing', 'origin', 'n_components', 'eigenvalues', 'normalized'):
        if key not in header:
            raise FieldFormatError(f'header missing {key}')

    shape = tuple(header['shape'])
    nodes = int(np.prod(shape))
    offset = 12 + length
    mask_len = (nodes + 7) // 8
    payload_len = 8 * nodes * header['n_components']
    if len(blob) != offset + mask_len + payload_len:
        raise FieldFormatError(
            f'size mismatch: expected {offset + mask_len + payload_len} bytes, got {len(blob)}')

    mask = np.unpackbits(np.frombuffer(blob[offset:offset + mask_len], dtype=np.uint8))[:nodes]
    mask = mask.astype(bool).reshape(shape)
    components = np.frombuffer(blob[offset + mask_len:], dtype='<f8')
    components = components.reshape((header['n_components'],) + shape).astype(float)

    grid = Grid(header['dim'], shape, header['spacing'], tuple(header['origin']), mask)
    field = SegregatedField(grid, components, header['eigenvalues'], bool(header['normalized']))
    return field, header


def write_field(u: SegregatedField, path: str) -> str:
    """Write the dump and its sidecar; returns the SHA-256 of the dump"""
    blob = encode_field(u)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, 'wb') as fh:
        fh.write(blob)
    with open(sidecar_path(path), 'w') as fh:
        json.dump(field_header(u), fh, sort_keys=True, indent=2)
        fh.write('\n')
    digest = hashlib.sha256(blob).hexdigest()
    logger.info(f"Wrote field dump {path} ({len(blob)} bytes, sha256 {digest[:12]})")
    return digest


def read_field(path: str) -> SegregatedField:
    if not os.path.exists(path):
        raise MissingArtifactError(f'field dump not found: {path}')
    with open(path, 'rb') as fh:
        field, header = decode_field(fh.read())
    side = sidecar_path(path)
    if os.path.exists(side):
        with open(side) as fh:
            try:
                mirrored = json.load(fh)
            except json.JSONDecodeError as e:
                raise FieldFormatError(f'unreadable sidecar {side}: {e}')
        if mirrored != header:
            raise FieldFormatError(f'sidecar {side} does not match the dump header')
    else:
        logger.warning(f"No sidecar found for {path}")
    return field

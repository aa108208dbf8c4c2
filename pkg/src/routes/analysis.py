"""
Analysis API Routes

Frequency profiles, singular-set detection, mean flatness and coverings on
oracle fields or stored field dumps.
"""

from flask import Blueprint, request, jsonify
import logging

import numpy as np

from src.lab.covering import inductive_cover
from src.lab.errors import ConfigError, LabError, MissingArtifactError
from src.lab.field_core import Grid, OracleSpec, make_oracle
from src.lab.field_io import read_field
from src.lab.frequency import frequency_profile, geometric_radii
from src.lab.mean_flatness import PointMeasure, mean_flatness
from src.lab.orchestrator import jsonable
from src.lab.singular_set import detect
from src.models.database import Artifact

logger = logging.getLogger(__name__)

analysis_bp = Blueprint('analysis', __name__)

def load_field(data):
    """Field named by the request: an inline oracle or a recorded field artifact"""
    if 'oracle' in data:
        oracle = data['oracle']
        if 'grid' not in oracle:
            raise ConfigError('oracle.grid', 'missing')
        return make_oracle(Grid.from_spec(oracle['grid']), OracleSpec.from_dict(oracle))
    if 'artifact_id' in data:
        artifact = Artifact.query.get(data['artifact_id'])
        if artifact is None or artifact.kind != 'field':
            raise MissingArtifactError(f"no field artifact {data['artifact_id']}")
        return read_field(artifact.path)
    raise ConfigError('field', "expected 'oracle' or 'artifact_id'")

def error_response(e):
    status = 404 if isinstance(e, MissingArtifactError) else 400
    return jsonify({'error': str(e), 'type': type(e).__name__}), status

@analysis_bp.route('/frequency', methods=['POST'])
def compute_frequency():
    """Frequency profile at a point"""
    try:
        data = request.get_json() or {}
        if 'center' not in data:
            return jsonify({'error': 'Missing required field: center'}), 400

        u = load_field(data)
        if 'radii' in data:
            radii = sorted(float(r) for r in data['radii'])
        else:
            h = u.grid.spacing
            radii = geometric_radii(data.get('r_min_cells', 8) * h, data.get('r_max', 0.25), data.get('count', 6))

        logger.info(f"Frequency profile at {data['center']} over {len(radii)} radii")
        profile = frequency_profile(u, data['center'], radii, float(data.get('A', 0.0)))
        return jsonify(jsonable(profile.to_dict()))

    except LabError as e:
        return error_response(e)
    except Exception as e:
        logger.error(f"Error computing frequency profile: {e}")
        return jsonify({'error': str(e)}), 500

@analysis_bp.route('/detect', methods=['POST'])
def detect_singular_set():
    """Classified junction and wall samples"""
    try:
        data = request.get_json() or {}
        u = load_field(data)
        h = u.grid.spacing
        result = detect(u, data.get('junction_radius_cells', 2) * h, int(data.get('wall_stride', 8)),
                        int(data.get('margin_cells', 16)))
        return jsonify(jsonable(result.to_dict()))

    except LabError as e:
        return error_response(e)
    except Exception as e:
        logger.error(f"Error detecting singular set: {e}")
        return jsonify({'error': str(e)}), 500

@analysis_bp.route('/flatness', methods=['POST'])
def compute_flatness():
    """Mean flatness records for a point measure at one or more (center, radius, k)"""
    try:
        data = request.get_json() or {}
        if 'atoms' not in data and 'points' not in data:
            return jsonify({'error': 'Missing required field: atoms'}), 400

        mu = PointMeasure.from_dict(data)
        queries = data.get('queries') or [{
            'center': data.get('center'),
            'radius': data.get('radius'),
            'k': data.get('k', max(mu.dim - 2, 0))
        }]

        records = []
        for query in queries:
            for field in ['center', 'radius']:
                if query.get(field) is None:
                    return jsonify({'error': f'Missing required field: {field}'}), 400
            records.append(mean_flatness(mu, query['center'], float(query['radius']), int(query['k'])).to_dict())

        return jsonify(jsonable({'records': records, 'total': len(records)}))

    except LabError as e:
        return error_response(e)
    except Exception as e:
        logger.error(f"Error computing mean flatness: {e}")
        return jsonify({'error': str(e)}), 500

@analysis_bp.route('/cover', methods=['POST'])
def compute_cover():
    """Frequency-drop covering of given points, or of the detected junctions"""
    try:
        data = request.get_json() or {}
        for field in ['r', 'terminal_scale', 'delta']:
            if field not in data:
                return jsonify({'error': f'Missing required field: {field}'}), 400

        u = load_field(data)
        points = data.get('points')
        if points is None:
            points = [s.location for s in detect(u).junctions]
        if not points:
            return jsonify({'status': 'empty set', 'balls': [], 'ball_count': 0})

        covering = inductive_cover(u, np.asarray(points, dtype=float), float(data['r']),
                                   float(data['terminal_scale']), float(data['delta']),
                                   float(data.get('A', 0.0)), float(data.get('rho', 0.25)),
                                   int(data.get('budget', 500)))
        out = covering.to_dict()
        out['status'] = 'ok'
        out['covers_input'] = covering.covers(points)
        out['vitali'] = covering.vitali_disjoint()
        return jsonify(jsonable(out))

    except LabError as e:
        return error_response(e)
    except Exception as e:
        logger.error(f"Error computing covering: {e}")
        return jsonify({'error': str(e)}), 500

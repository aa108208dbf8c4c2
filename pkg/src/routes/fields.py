"""
Field API Routes

Oracle construction, small synchronous solves and the list of stored field dumps.
"""

from flask import Blueprint, request, jsonify, current_app
import logging
import os

from src.lab.errors import LabError
from src.lab.field_core import Grid, OracleSpec, make_oracle
from src.lab.orchestrator import RunConfig, jsonable, run_solve
from src.lab.singular_set import extract_interface
from src.ledger import RunLedger
from src.models.database import Artifact

logger = logging.getLogger(__name__)

fields_bp = Blueprint('fields', __name__)

@fields_bp.route('/', methods=['GET'])
def get_fields():
    """List field dumps recorded in the ledger"""
    try:
        limit = request.args.get('limit', 50, type=int)
        offset = request.args.get('offset', 0, type=int)

        query = Artifact.query.filter(Artifact.kind == 'field').order_by(Artifact.created_at.desc())
        fields = query.offset(offset).limit(limit).all()

        return jsonify({
            'fields': [artifact.to_dict() for artifact in fields],
            'total': query.count(),
            'limit': limit,
            'offset': offset
        })

    except Exception as e:
        return jsonify({'error': str(e)}), 500

@fields_bp.route('/oracle', methods=['POST'])
def build_oracle():
    """Build a homogeneous oracle field and summarize it"""
    try:
        data = request.get_json() or {}
        for field in ['m', 'grid']:
            if field not in data:
                return jsonify({'error': f'Missing required field: {field}'}), 400

        grid = Grid.from_spec(data['grid'])
        u = make_oracle(grid, OracleSpec.from_dict(data))

        return jsonify(jsonable({
            'oracle': OracleSpec.from_dict(data).to_dict(),
            'grid': grid.describe(),
            'n_components': u.n_components,
            'norms': u.l2_norms(),
            'interface_cells': len(extract_interface(u))
        }))

    except LabError as e:
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        logger.error(f"Error building oracle: {e}")
        return jsonify({'error': str(e)}), 500

@fields_bp.route('/solve', methods=['POST'])
def solve_field():
    """Run a small partition solve synchronously and record it"""
    ledger = RunLedger(origin='api')
    run = None
    try:
        data = request.get_json() or {}
        for field in ['n_components', 'grid']:
            if field not in data and not (field == 'n_components' and 'N' in data):
                return jsonify({'error': f'Missing required field: {field}'}), 400

        grid = Grid.from_spec(data['grid'])
        limit = current_app.config['LAB_MAX_API_NODES']
        if grid.node_count > limit:
            return jsonify({
                'error': f'Grid has {grid.node_count} nodes; synchronous solves are limited to {limit}. '
                         'Use the partition-lab CLI for larger runs.'
            }), 400

        seed = int(data.get('seed', 0))
        run = ledger.start_run('solve', data, seed)
        run_id = run.id if run else 'unrecorded'
        output_dir = os.path.join(current_app.config['LAB_OUTPUT_DIR'], run_id)
        config = RunConfig.from_dict({'stages': ['solve'], 'solver': data}, seed=seed,
                                     threads=current_app.config['LAB_THREADS'], output_dir=output_dir)

        logger.info(f"Starting API solve {run_id} ({grid.node_count} nodes)")
        result = run_solve(config)
        artifacts = ledger.record_result(run, result)
        logger.info(f"API solve {run_id} finished with exit code {result.exit_code}")

        return jsonify(jsonable({
            'run_id': run_id,
            'exit_code': result.exit_code,
            'converged': result.exit_code == 0,
            'metrics': result.metrics,
            'artifacts': [artifact.to_dict() for artifact in artifacts] or result.artifacts
        })), 201

    except LabError as e:
        ledger.fail_run(run, e, e.exit_code)
        return jsonify({'error': str(e)}), 400
    except Exception as e:
        logger.error(f"Error running API solve: {e}")
        ledger.fail_run(run, e, 1)
        return jsonify({'error': str(e)}), 500

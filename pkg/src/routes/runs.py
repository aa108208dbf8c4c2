from flask import Blueprint, request, jsonify
from src.models.database import db, Run, Artifact, ArtifactLineage
from src.ledger import trace_artifact

runs_bp = Blueprint('runs', __name__)

@runs_bp.route('/', methods=['GET'])
def get_runs():
    """Get recorded runs with optional filtering"""
    try:
        stage = request.args.get('stage')
        status = request.args.get('status')
        limit = request.args.get('limit', 50, type=int)
        offset = request.args.get('offset', 0, type=int)

        query = Run.query

        if stage:
            query = query.filter(Run.stage == stage)
        if status:
            query = query.filter(Run.status == status)

        runs = query.order_by(Run.started_at.desc()).offset(offset).limit(limit).all()
        total = query.count()

        return jsonify({
            'runs': [run.to_dict() for run in runs],
            'total': total,
            'limit': limit,
            'offset': offset
        })

    except Exception as e:
        return jsonify({'error': str(e)}), 500

@runs_bp.route('/<run_id>', methods=['GET'])
def get_run(run_id):
    """Get a run with its artifacts"""
    run = Run.query.get(run_id)
    if run is None:
        return jsonify({'error': 'Run not found'}), 404
    try:
        result = run.to_dict()
        result['artifacts'] = [artifact.to_dict() for artifact in run.artifacts]
        return jsonify(result)

    except Exception as e:
        return jsonify({'error': str(e)}), 500

@runs_bp.route('/trace/<artifact_id>', methods=['GET'])
def trace_artifact_lineage(artifact_id):
    """Trace the complete provenance chain of an artifact"""
    artifact = Artifact.query.get(artifact_id)
    if artifact is None:
        return jsonify({'error': 'Artifact not found'}), 404
    try:
        return jsonify(trace_artifact(artifact))

    except Exception as e:
        return jsonify({'error': str(e)}), 500

@runs_bp.route('/stats', methods=['GET'])
def get_run_stats():
    """Get statistics about recorded runs"""
    try:
        total_runs = Run.query.count()
        by_status = dict(db.session.query(Run.status, db.func.count(Run.id)).group_by(Run.status).all())
        by_stage = dict(db.session.query(Run.stage, db.func.count(Run.id)).group_by(Run.stage).all())

        total_artifacts = Artifact.query.count()
        artifacts_with_lineage = db.session.query(ArtifactLineage.artifact_id).distinct().count()

        stats = {
            'total_runs': total_runs,
            'runs_by_status': by_status,
            'runs_by_stage': by_stage,
            'total_artifacts': total_artifacts,
            'artifacts_with_lineage': artifacts_with_lineage,
            'lineage_coverage_percentage': round((artifacts_with_lineage / total_artifacts * 100), 2) if total_artifacts > 0 else 0
        }

        return jsonify(stats)

    except Exception as e:
        return jsonify({'error': str(e)}), 500

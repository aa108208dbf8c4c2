import json
import logging
import uuid
from datetime import datetime
from typing import Dict, List, Optional

from src.lab.orchestrator import StageResult, jsonable
from src.models.database import db, Run, Artifact, ArtifactLineage

logger = logging.getLogger(__name__)

STATUS_BY_EXIT = {0: 'completed', 2: 'not_converged'}


class RunLedger:
    """Records stage executions, their artifacts and the input hashes behind each artifact"""

    def __init__(self, origin: str = 'cli'):
        self.origin = origin

    def start_run(self, stage: str, config: Dict, seed: int = 0) -> Optional[Run]:
        try:
            run = Run(
                id=str(uuid.uuid4()),
                stage=stage,
                origin=self.origin,
                config=json.dumps(jsonable(config), sort_keys=True),
                seed=seed,
                status='running'
            )
            db.session.add(run)
            db.session.commit()
            return run
        except Exception as e:
            logger.error(f"Error recording start of {stage} run: {e}")
            db.session.rollback()
            return None

    def record_result(self, run: Optional[Run], result: StageResult) -> List[Artifact]:
        """Attach artifacts and lineage to the run and close it"""
        if run is None:
            return []
        try:
            artifacts = []
            for item in result.artifacts:
                artifact = Artifact(
                    id=str(uuid.uuid4()),
                    run_id=run.id,
                    kind=item['kind'],
                    path=item['path'],
                    sha256=item['sha256'],
                    size=item['size']
                )
                db.session.add(artifact)
                lineage = ArtifactLineage(
                    id=str(uuid.uuid4()),
                    artifact_id=artifact.id,
                    input_chain=json.dumps(result.inputs),
                    metrics=json.dumps(jsonable(result.metrics), sort_keys=True),
                    validation_status='validated' if result.exit_code == 0 else 'pending',
                    last_verified=datetime.utcnow()
                )
                db.session.add(lineage)
                artifacts.append(artifact)

            run.exit_code = result.exit_code
            run.status = STATUS_BY_EXIT.get(result.exit_code, 'failed')
            run.metrics = json.dumps(jsonable(result.metrics), sort_keys=True)
            run.finished_at = datetime.utcnow()
            db.session.commit()
            return artifacts
        except Exception as e:
            logger.error(f"Error recording result of run {run.id}: {e}")
            db.session.rollback()
            return []

    def fail_run(self, run: Optional[Run], error: Exception, exit_code: int):
        if run is None:
            return
        try:
            run.status = 'failed'
            run.exit_code = exit_code
            run.error = str(error)
            run.finished_at = datetime.utcnow()
            db.session.commit()
        except Exception as e:
            logger.error(f"Error recording failure of run {run.id}: {e}")
            db.session.rollback()


def trace_artifact(artifact: Artifact) -> Dict:
    """Provenance chain: the artifact, its run, and recursively the artifacts its inputs hash to"""
    seen = set()

    def walk(node: Artifact) -> Dict:
        seen.add(node.id)
        lineage = node.lineage[0] if node.lineage else None
        parents = []
        if lineage and lineage.input_chain:
            for digest in json.loads(lineage.input_chain):
                parent = Artifact.query.filter(Artifact.sha256 == digest).order_by(Artifact.created_at).first()
                if parent is None:
                    parents.append({'sha256': digest, 'recorded': False})
                elif parent.id not in seen:
                    parents.append(walk(parent))
        return {
            'artifact': node.to_dict(),
            'run': node.run.to_dict() if node.run else None,
            'lineage': lineage.to_dict() if lineage else None,
            'inputs': parents
        }

    return walk(artifact)

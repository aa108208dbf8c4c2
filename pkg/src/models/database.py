from flask_sqlalchemy import SQLAlchemy
from datetime import datetime
import json

db = SQLAlchemy()

class Run(db.Model):
    __tablename__ = 'runs'

    id = db.Column(db.String(50), primary_key=True)
    stage = db.Column(db.String(20), nullable=False)  # solve, analyze, cover, report, oracle, ...
    origin = db.Column(db.String(10), default='cli')  # cli, api
    config = db.Column(db.Text)  # JSON object
    seed = db.Column(db.Integer, default=0)
    status = db.Column(db.String(20), default='running')  # running, completed, not_converged, failed
    exit_code = db.Column(db.Integer)
    error = db.Column(db.Text)
    metrics = db.Column(db.Text)  # JSON object
    started_at = db.Column(db.DateTime, default=datetime.utcnow)
    finished_at = db.Column(db.DateTime)

    def to_dict(self):
        return {
            'id': self.id,
            'stage': self.stage,
            'origin': self.origin,
            'config': json.loads(self.config) if self.config else {},
            'seed': self.seed,
            'status': self.status,
            'exit_code': self.exit_code,
            'error': self.error,
            'metrics': json.loads(self.metrics) if self.metrics else {},
            'started_at': self.started_at.isoformat() if self.started_at else None,
            'finished_at': self.finished_at.isoformat() if self.finished_at else None,
            'artifact_ids': [artifact.id for artifact in self.artifacts]
        }

class Artifact(db.Model):
    __tablename__ = 'artifacts'

    id = db.Column(db.String(50), primary_key=True)
    run_id = db.Column(db.String(50), db.ForeignKey('runs.id'), nullable=False)
    kind = db.Column(db.String(30), nullable=False)  # field, frequency, samples, covering, summary, ...
    path = db.Column(db.String(500))
    sha256 = db.Column(db.String(64), index=True)
    size = db.Column(db.Integer)
    created_at = db.Column(db.DateTime, default=datetime.utcnow)

    # Relationships
    run = db.relationship('Run', backref='artifacts')

    def to_dict(self):
        return {
            'id': self.id,
            'run_id': self.run_id,
            'kind': self.kind,
            'path': self.path,
            'sha256': self.sha256,
            'size': self.size,
            'created_at': self.created_at.isoformat() if self.created_at else None
        }

class ArtifactLineage(db.Model):
    __tablename__ = 'artifact_lineage'

    id = db.Column(db.String(50), primary_key=True)
    artifact_id = db.Column(db.String(50), db.ForeignKey('artifacts.id'), nullable=False)
    input_chain = db.Column(db.Text)  # JSON array of input artifact hashes
    metrics = db.Column(db.Text)  # JSON object with stage metrics
    validation_status = db.Column(db.String(20), default='pending')  # validated, pending, failed
    last_verified = db.Column(db.DateTime)
    created_at = db.Column(db.DateTime, default=datetime.utcnow)

    # Relationships
    artifact = db.relationship('Artifact', backref='lineage')

    def to_dict(self):
        return {
            'id': self.id,
            'artifact_id': self.artifact_id,
            'input_chain': json.loads(self.input_chain) if self.input_chain else [],
            'metrics': json.loads(self.metrics) if self.metrics else {},
            'validation_status': self.validation_status,
            'last_verified': self.last_verified.isoformat() if self.last_verified else None,
            'created_at': self.created_at.isoformat() if self.created_at else None
        }

import numpy as np
import pytest

from src.lab.field_core import Grid, OracleSpec, make_oracle
from src.lab.partition_solver import SolveConfig, solve_partition


def disk_spec(spacing, radius=1.0):
    return {'kind': 'disk', 'center': [0.0, 0.0], 'radius': radius, 'spacing': spacing}


def square_spec(spacing, half_width=1.25):
    return {'kind': 'rectangle', 'lower': [-half_width, -half_width], 'upper': [half_width, half_width],
            'spacing': spacing}


@pytest.fixture
def app(tmp_path):
    from src.main import create_app
    from src.models.database import db

    app = create_app('testing')
    app.config['LAB_OUTPUT_DIR'] = str(tmp_path / 'runs')
    with app.app_context():
        yield app
        db.session.remove()
        db.drop_all()


@pytest.fixture
def client(app):
    return app.test_client()


@pytest.fixture(scope='session')
def oracle_field():
    """Cached oracle builder: oracle_field(m, spacing=1/64, domain='disk', rotation=0.0)"""
    cache = {}

    def build(m, spacing=1.0 / 64, domain='disk', rotation=0.0):
        key = (m, spacing, domain, rotation)
        if key not in cache:
            if domain == 'disk':
                spec = disk_spec(spacing)
            elif domain == 'square':
                spec = square_spec(spacing)
            else:
                spec = {'kind': 'ball', 'center': [0.0, 0.0, 0.0], 'radius': 1.0, 'spacing': spacing}
            cache[key] = make_oracle(Grid.from_spec(spec), OracleSpec(m, rotation))
        return cache[key]

    return build


@pytest.fixture(scope='session')
def disk3_solve():
    """Small N=3 unit-disk solve shared by the solver and detection tests"""
    config = SolveConfig(n_components=3, grid=disk_spec(1.0 / 32), seed=3, max_iters=300)
    return solve_partition(config)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)

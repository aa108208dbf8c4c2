import pytest

DISK_16 = {'kind': 'disk', 'center': [0.0, 0.0], 'radius': 1.0, 'spacing': 1.0 / 16}
DISK_64 = {'kind': 'disk', 'center': [0.0, 0.0], 'radius': 1.0, 'spacing': 1.0 / 64}
CORNERS = {'points': [[0.5, 0.5], [0.5, -0.5], [-0.5, 0.5], [-0.5, -0.5]]}


def test_health(client):
    response = client.get('/api/health')
    assert response.status_code == 200
    assert response.get_json()['status'] == 'healthy'


def test_api_root(client):
    assert '/api/analysis' in client.get('/api/').get_json()['endpoints']


class TestFields:
    def test_oracle(self, client):
        response = client.post('/api/fields/oracle', json={'m': 3, 'grid': DISK_16})
        assert response.status_code == 200
        body = response.get_json()
        assert body['n_components'] == 3
        assert body['interface_cells'] > 0

    def test_oracle_missing_grid(self, client):
        assert client.post('/api/fields/oracle', json={'m': 3}).status_code == 400

    def test_oracle_bad_order(self, client):
        assert client.post('/api/fields/oracle', json={'m': 1, 'grid': DISK_16}).status_code == 400

    def test_large_solve_refused(self, client):
        grid = dict(DISK_16, spacing=1.0 / 128)
        response = client.post('/api/fields/solve', json={'N': 3, 'grid': grid})
        assert response.status_code == 400
        assert 'limited' in response.get_json()['error']

    def test_solve_is_recorded(self, client):
        grid = dict(DISK_16, spacing=1.0 / 8)
        response = client.post('/api/fields/solve', json={'N': 2, 'grid': grid, 'max_iters': 20, 'seed': 4})
        assert response.status_code == 201
        body = response.get_json()
        assert {a['kind'] for a in body['artifacts']} == {'field', 'solve_report'}

        run = client.get(f"/api/runs/{body['run_id']}").get_json()
        assert run['stage'] == 'solve'
        assert run['origin'] == 'api'
        assert len(run['artifacts']) == 2

        fields = client.get('/api/fields/').get_json()
        assert fields['total'] == 1
        trace = client.get(f"/api/runs/trace/{fields['fields'][0]['id']}").get_json()
        assert trace['run']['id'] == body['run_id']

        stats = client.get('/api/runs/stats').get_json()
        assert stats['total_runs'] == 1
        assert stats['lineage_coverage_percentage'] == 100.0


class TestAnalysis:
    def test_frequency(self, client):
        response = client.post('/api/analysis/frequency', json={
            'oracle': {'m': 3, 'grid': DISK_64}, 'center': [0.0, 0.0], 'radii': [0.25, 0.5]})
        assert response.status_code == 200
        records = response.get_json()['records']
        assert len(records) == 2
        assert records[1]['I'] == pytest.approx(1.5, abs=0.05)

    def test_frequency_needs_center(self, client):
        response = client.post('/api/analysis/frequency', json={'oracle': {'m': 3, 'grid': DISK_16}})
        assert response.status_code == 400

    def test_frequency_inadmissible_radius(self, client):
        response = client.post('/api/analysis/frequency', json={
            'oracle': {'m': 3, 'grid': DISK_16}, 'center': [0.0, 0.0], 'radii': [2.0]})
        assert response.status_code == 400
        assert response.get_json()['type'] == 'AdmissibilityError'

    def test_detect(self, client):
        response = client.post('/api/analysis/detect', json={'oracle': {'m': 3, 'grid': DISK_64}})
        assert response.status_code == 200
        assert response.get_json()['junction_count'] == 1

    def test_flatness(self, client):
        response = client.post('/api/analysis/flatness', json=dict(CORNERS, center=[0.0, 0.0], radius=2.0, k=1))
        assert response.status_code == 200
        assert response.get_json()['records'][0]['value'] == pytest.approx(0.125)

    def test_flatness_needs_radius(self, client):
        response = client.post('/api/analysis/flatness', json=dict(CORNERS, center=[0.0, 0.0]))
        assert response.status_code == 400

    def test_cover(self, client):
        response = client.post('/api/analysis/cover', json={
            'oracle': {'m': 3, 'grid': DISK_64}, 'points': [[0.0, 0.0], [-0.3, 0.0]],
            'r': 0.25, 'terminal_scale': 0.07, 'delta': 0.1})
        assert response.status_code == 200
        body = response.get_json()
        assert body['status'] == 'ok'
        assert body['covers_input']

    def test_unknown_artifact(self, client):
        response = client.post('/api/analysis/detect', json={'artifact_id': 'missing'})
        assert response.status_code == 404


def test_unknown_run(client):
    assert client.get('/api/runs/missing').status_code == 404
    assert client.get('/api/runs/trace/missing').status_code == 404

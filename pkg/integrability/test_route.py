import pytest
from flask import json

from . import __version__
from .conftest import SADDLE, EXPONENTIAL, QUARTIC, OSCILLATOR
from .routes import validate_run_data

# --- Test Functions ---

def test_index_reports_health(client):
    response = client.get('/')
    assert response.status_code == 200
    json_data = response.get_json()
    assert json_data['version'] == __version__
    assert json_data['commands'] == ['check', 'invariant', 'simulate', 'verify']


def test_check_satisfied(client):
    """
    A condition-satisfying Hamiltonian gives a 200 with verdict 'satisfied'.
    """
    response = client.post('/api/check', json={"hamiltonian": SADDLE})

    assert response.status_code == 200
    assert response.content_type == 'application/json'
    json_data = response.get_json()
    assert json_data['verdict'] == 'satisfied'
    assert json_data['exit_status'] == 0
    assert len(json_data['residuals']) == 4
    # Defaults come from the test configuration
    assert json_data['config']['samples'] == 200
    assert json_data['config']['T'] == 5.0


def test_check_violated_is_still_a_successful_request(client):
    response = client.post('/api/check', json={"hamiltonian": OSCILLATOR, "samples": 20})
    assert response.status_code == 200
    json_data = response.get_json()
    assert json_data['verdict'] == 'violated'
    assert json_data['exit_status'] == 1
    assert json_data['config']['samples'] == 20


def test_check_overrides_are_echoed(client):
    payload = {
        "hamiltonian": EXPONENTIAL,
        "domain": "-0.5:0.5,-0.5:0.5,-0.5:0.5,-0.5:0.5",
        "seed": 3,
        "tol": 1e-8,
        "mode": "relative",
    }
    json_data = client.post('/api/check', json=payload).get_json()
    assert json_data['config']['domain'] == payload['domain']
    assert json_data['config']['seed'] == 3
    assert json_data['config']['tol'] == 1e-8
    assert json_data['config']['mode'] == 'relative'
    assert json_data['verdict'] == 'satisfied'


def test_response_body_is_deterministic(client):
    payload = {"hamiltonian": EXPONENTIAL, "samples": 30}
    first = client.post('/api/check', json=payload).data
    second = client.post('/api/check', json=payload).data
    assert first == second


def test_invariant_values(client):
    payload = {"hamiltonian": QUARTIC, "points": [[1, 1, 1, 1], [1, 2, 0, 1]], "samples": 40}
    response = client.post('/api/invariant', json=payload)
    assert response.status_code == 200
    invariant = response.get_json()['invariant']
    assert invariant['backend'] == 'closed-form'
    values = [entry['value'] for entry in invariant['values']]
    assert values[0] == pytest.approx(0.0, abs=1e-12)
    assert values[1] == pytest.approx(-6.0, abs=1e-10)


def test_invariant_points_as_text(client):
    payload = {"hamiltonian": SADDLE, "points": "1,2,3,4", "base": [0, 0, 0, 0]}
    json_data = client.post('/api/invariant', json=payload).get_json()
    assert json_data['invariant']['values'][0]['value'] == pytest.approx(-11.0, abs=1e-8)


def test_simulate_small_run(client):
    payload = {"hamiltonian": SADDLE, "start": "1,0,0,1", "T": 0.5, "h": 0.01, "samples": 20}
    response = client.post('/api/simulate', json=payload)
    assert response.status_code == 200
    json_data = response.get_json()
    assert json_data['verdict'] == 'succeeded'
    assert json_data['trajectory']['steps'] == 50
    assert json_data['trajectory']['max_dH'] <= 1e-8


def test_verify_small_run(client):
    payload = {"hamiltonian": SADDLE, "T": 0.5, "h": 0.01}
    json_data = client.post('/api/verify', json=payload).get_json()
    assert json_data['verdict'] == 'satisfied'
    assert json_data['independence']['verdict'] == 'independent'


# --- Errors ---

def test_missing_hamiltonian(client):
    response = client.post('/api/check', json={"samples": 10})
    assert response.status_code == 400
    assert "'hamiltonian' is required" in response.get_json()['error']


def test_body_must_be_an_object(client):
    response = client.post('/api/check', data="x1 + p1", content_type='text/plain')
    assert response.status_code == 400
    assert 'error' in response.get_json()


def test_wrong_field_type(client):
    response = client.post('/api/check', json={"hamiltonian": SADDLE, "samples": "many"})
    assert response.status_code == 400
    assert "'samples' must be an integer" in response.get_json()['error']


def test_unknown_field(client):
    response = client.post('/api/check', json={"hamiltonian": SADDLE, "colour": "blue"})
    assert response.status_code == 400
    assert "colour" in response.get_json()['error']


def test_parse_error_is_a_usage_error(client):
    response = client.post('/api/check', json={"hamiltonian": "x1 +* p1"})
    assert response.status_code == 400
    json_data = response.get_json()
    assert json_data['verdict'] == 'usage-error'
    assert json_data['exit_status'] == 2
    assert json_data['error']['kind'] == 'syntax'


def test_domain_error_is_unprocessable(client):
    response = client.post('/api/check', json={"hamiltonian": "x1*ln(x1) + p1"})
    assert response.status_code == 422
    assert response.get_json()['verdict'] == 'domain-error'


def test_bad_point_list(client):
    response = client.post('/api/invariant', json={"hamiltonian": SADDLE, "points": [[1, 2, 3]]})
    assert response.status_code == 400


def test_unknown_route(client):
    response = client.get('/api/notes')
    assert response.status_code == 404


# --- Validation Helper ---

def test_validate_run_data_accepts_full_body():
    data = json.loads(json.dumps({
        "hamiltonian": SADDLE, "samples": 10, "seed": 1, "segments": 4, "tol": 1, "T": 1.5, "h": 0.1,
        "domain": "-1:1,-1:1,-1:1,-1:1", "base": [0, 0, 0, 0], "start": "1,0,0,1",
        "points": "1,2,3,4", "method": "leapfrog", "mode": "absolute",
    }))
    validated, errors = validate_run_data(data)
    assert errors == []
    assert validated['tol'] == 1.0
    assert validated['base'] == "0.0,0.0,0.0,0.0"
    assert validated['method'] == 'leapfrog'


def test_validate_run_data_collects_every_error():
    _, errors = validate_run_data({"samples": True, "method": "euler", "mode": "loose", "base": [1, 2]})
    assert len(errors) == 5


# --- Size caps ---

@pytest.mark.parametrize("route, payload", [
    ('/api/check', {"hamiltonian": SADDLE, "samples": 10**9}),
    ('/api/invariant', {"hamiltonian": SADDLE, "segments": 10**6}),
    ('/api/simulate', {"hamiltonian": SADDLE, "T": 1e9, "h": 1e-3}),
    ('/api/verify', {"hamiltonian": "x1 + " * 4000 + "p1"}),
])
def test_oversized_request_is_a_bad_request(client, route, payload):
    response = client.post(route, json=payload)
    assert response.status_code == 400
    json_data = response.get_json()
    assert json_data['kind'] == 'usage'
    assert 'at most' in json_data['error']


def test_deep_expression_is_a_bad_request(client):
    response = client.post('/api/check', json={"hamiltonian": "(" * 1500 + "x1" + ")" * 1500})
    assert response.status_code == 400
    assert response.get_json()['error']['kind'] == 'syntax'

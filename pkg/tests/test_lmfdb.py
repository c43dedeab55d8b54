import json
import math

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import online, synthetic_hecke
from lowlying.errors import InsufficientDataError, InvariantError, NetworkError, SchemaError
from lowlying.kuznetsov import hecke_power
from lowlying.lmfdb import (
    HeckeEigenvalueSource,
    LmfdbClient,
    _form_path,
    _zero_density,
    cache_dir,
    explicit_formula_check,
    fetch_forms,
    hecke_residual,
    load_source,
    save_source,
    zero_truncation_estimate,
)
from lowlying.transforms import make_test_triangle

MAASS_LABEL = "1.0.1.1.1"


def _ramanujan_tau(n_max):
    """tau(1..n_max) from q prod (1 - q^n)^24."""
    poly = np.zeros(n_max, dtype=object)
    poly[0] = 1
    for n in range(1, n_max):
        for _ in range(24):
            poly[n:] = poly[n:] - poly[:-n].copy()
    return [int(c) for c in poly]


def _density_zeros(count, t_f):
    """Ordinates with exactly one zero per unit of the modelled density."""
    g = np.linspace(0.0, 400.0, 400001)
    cum = np.concatenate([[0.0], np.cumsum((_zero_density(g[1:], t_f) + _zero_density(g[:-1], t_f)) / 2
                                           * np.diff(g))])
    return tuple(float(x) for x in np.interp(np.arange(1, count + 1), cum, g))


def _maass_record(coeffs=None):
    return {"maass_label": MAASS_LABEL, "spectral_parameter": 9.53369526135, "symmetry": 1,
            "coefficients": coeffs if coeffs is not None else synthetic_hecke(200, seed=3)}


class Server:
    """Mock endpoint with a request counter and a scripted failure sequence."""

    def __init__(self, maass=None, zeros=None, newform=None, failures=()):
        self.maass = maass if maass is not None else json.dumps({"data": [_maass_record()]}).encode()
        self.zeros = zeros if zeros is not None else json.dumps(
            {"data": [{"positive_zeros": list(_density_zeros(40, 9.53))}]}).encode()
        self.newform = newform
        self.failures = list(failures)
        self.calls = []

    def __call__(self, request: httpx.Request) -> httpx.Response:
        self.calls.append(request.url.path)
        if self.failures:
            return httpx.Response(self.failures.pop(0))
        body = {"/api/maass_newforms/": self.maass, "/api/lfunc_lfunctions/": self.zeros,
                "/api/mf_newforms/": self.newform}.get(request.url.path)
        if body is None:
            return httpx.Response(404)
        return httpx.Response(200, content=body)


def _client(server, **kw):
    return LmfdbClient(transport=httpx.MockTransport(server), spacing=0.0, backoff=0.0, **kw)


# ---------------------------------------------------------------------------
# cache contract
# ---------------------------------------------------------------------------


def test_repeated_fetch_hits_cache():
    server = Server()
    client = _client(server)
    first = fetch_forms("maass", 1, 1, 100, client=client)
    calls = client.network_calls
    assert calls == 2
    second = fetch_forms("maass", 1, 1, 100, client=client)
    assert client.network_calls == calls
    assert first == second
    files = sorted((cache_dir() / "responses").rglob("*.json"))
    assert server.maass in [f.read_bytes() for f in files]


def test_offline_uses_cache_and_fails_without_it():
    fetch_forms("maass", 1, 1, 100, client=_client(Server()))
    offline = _client(Server(), offline=True)
    assert fetch_forms("maass", 1, 1, 100, client=offline)[0].label == MAASS_LABEL
    assert offline.network_calls == 0
    with pytest.raises(NetworkError):
        fetch_forms("maass", 1, 2, 100, client=offline)


def test_count_zero_is_empty():
    server = Server()
    assert fetch_forms("maass", 1, 0, 100, client=_client(server)) == []
    assert server.calls == []


def test_fetched_source_is_multiplicative():
    src = fetch_forms("maass", 1, 1, 100, client=_client(Server()))[0]
    assert abs(src.coefficient(2) * src.coefficient(3) - src.coefficient(6)) <= 1e-6
    assert src.sign == -1 and len(src.zeros) == 40
    assert src.fetched_at
    assert load_source(MAASS_LABEL) == src


def test_holomorphic_delta_normalisation():
    tau = _ramanujan_tau(40)
    assert tau[:6] == [1, -24, 252, -1472, 4830, -6048]
    payload = json.dumps({"data": [{"label": "1.12.a.a", "weight": 12, "traces": [0] + tau,
                                    "fricke_eigenvalue": 1}]}).encode()
    server = Server(newform=payload, zeros=json.dumps({"data": []}).encode())
    src = fetch_forms("holomorphic", 1, 1, 40, client=_client(server))[0]
    assert abs(src.coefficient(2) - (-24 / 2**5.5)) <= 1e-15
    assert hecke_residual(src.coefficients) <= 1e-12
    assert src.sign == 1 and src.zeros == ()


# ---------------------------------------------------------------------------
# failures
# ---------------------------------------------------------------------------


def test_schema_error_on_non_json():
    with pytest.raises(SchemaError):
        fetch_forms("maass", 1, 1, 100, client=_client(Server(maass=b"<html>")))


def test_schema_error_quarantines_payload():
    bad = json.dumps({"data": [{"maass_label": MAASS_LABEL}]}).encode()
    with pytest.raises(SchemaError):
        fetch_forms("maass", 1, 1, 100, client=_client(Server(maass=bad)))
    assert list((cache_dir() / "quarantine").glob("*.json"))
    assert not list((cache_dir() / "responses").rglob("*.json"))


def test_hecke_violation_rejected():
    coeffs = synthetic_hecke(100, seed=5)
    coeffs[5] += 0.01  # lambda(6)
    server = Server(maass=json.dumps({"data": [_maass_record(coeffs)]}).encode())
    with pytest.raises(InvariantError):
        fetch_forms("maass", 1, 1, 100, client=_client(server))
    assert list((cache_dir() / "quarantine").glob("*.json"))
    assert load_source(MAASS_LABEL) is None


def test_kim_sarnak_violation_rejected():
    lam2 = 2.5  # above 2 * 2^{7/64}
    coeffs = [1.0] + [0.0] * 63
    for e in range(1, 7):
        coeffs[2**e - 1] = hecke_power(lam2, e)
    server = Server(maass=json.dumps({"data": [_maass_record(coeffs)]}).encode())
    with pytest.raises(InvariantError):
        fetch_forms("maass", 1, 1, 64, client=_client(server))


def test_retries_then_succeeds():
    server = Server(failures=[503, 429])
    client = _client(server)
    fetch_forms("maass", 1, 1, 100, client=client, with_zeros=False)
    assert client.network_calls == 3


def test_retries_exhausted():
    client = _client(Server(failures=[500, 502, 503, 504]))
    with pytest.raises(NetworkError):
        fetch_forms("maass", 1, 1, 100, client=client)
    assert client.network_calls == 3


def test_client_error_is_not_retried():
    client = _client(Server(failures=[404]))
    with pytest.raises(NetworkError):
        fetch_forms("maass", 1, 1, 100, client=client)
    assert client.network_calls == 1


def test_transport_error_retried():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ConnectError("refused", request=request)

    client = LmfdbClient(transport=httpx.MockTransport(handler), spacing=0.0, backoff=0.0)
    with pytest.raises(NetworkError):
        fetch_forms("maass", 1, 1, 100, client=client)
    assert len(calls) == 3


def test_corrupt_stored_form_quarantined():
    src = HeckeEigenvalueSource(MAASS_LABEL, "maass", 9.5, 1, tuple(synthetic_hecke(30, seed=1)))
    path = save_source(src)
    assert load_source(MAASS_LABEL) == src
    path.write_text("{not json")
    assert load_source(MAASS_LABEL) is None
    assert not _form_path(MAASS_LABEL).exists()
    assert list((cache_dir() / "quarantine").glob("*.json"))


# ---------------------------------------------------------------------------
# data type
# ---------------------------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 60), st.integers(0, 10**6), st.sampled_from(["maass", "holomorphic"]),
       st.floats(0.1, 50), st.sampled_from([1, -1]),
       st.lists(st.floats(0.1, 1e3), max_size=20))
def test_json_round_trip(n, seed, kind, t, sign, zeros):
    src = HeckeEigenvalueSource("x.y", kind, t, sign, tuple(synthetic_hecke(n, seed)) if n else (),
                                tuple(zeros), "2024-01-01T00:00:00+00:00")
    assert HeckeEigenvalueSource.from_json(src.to_json()) == src


@settings(max_examples=40, deadline=None)
@given(st.integers(10, 120), st.integers(0, 10**6))
def test_synthetic_sources_validate(n, seed):
    HeckeEigenvalueSource("s", "maass", 1.0, 1, tuple(synthetic_hecke(n, seed))).validate()


def test_missing_coefficient():
    src = HeckeEigenvalueSource("s", "maass", 1.0, 1, (1.0, 0.5))
    with pytest.raises(InsufficientDataError):
        src.coefficient(3)


# ---------------------------------------------------------------------------
# explicit formula
# ---------------------------------------------------------------------------


def _source(zeros=40, n_max=200):
    return HeckeEigenvalueSource(MAASS_LABEL, "maass", 9.53, 1, tuple(synthetic_hecke(n_max, seed=3)),
                                 _density_zeros(zeros, 9.53))


def test_explicit_formula_tiny_support():
    phi = make_test_triangle(0.1)
    r = explicit_formula_check(_source(), phi, 1000.0)  # X^sigma < 2: no prime powers
    assert r.prime_side == 0.5 * float(phi(0.0))
    assert r.gap == abs(r.zero_side - r.prime_side)
    assert r.truncation > 0


def test_explicit_formula_needs_ten_zeros():
    with pytest.raises(InsufficientDataError):
        explicit_formula_check(_source(zeros=9), make_test_triangle(1.0), 100.0)


def test_explicit_formula_needs_coverage():
    with pytest.raises(InsufficientDataError):
        explicit_formula_check(_source(n_max=50), make_test_triangle(1.0), 100.0)


def test_truncation_estimate_decreasing():
    phi = make_test_triangle(1.0)
    vals = [zero_truncation_estimate(phi, 100.0, g, 9.53) for g in (10, 20, 40, 80, 160)]
    assert all(isinstance(v, float) for v in vals)
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_doubling_zeros_within_truncation():
    phi = make_test_triangle(1.0)
    src = _source(zeros=320)
    n = 10
    while 2 * n <= 320:
        a = explicit_formula_check(src, phi, 100.0, zeros_used=n)
        b = explicit_formula_check(src, phi, 100.0, zeros_used=2 * n)
        assert b.gap <= a.gap + a.truncation
        assert abs(b.zero_side - a.zero_side) <= a.truncation
        n *= 2


@pytest.mark.network
@pytest.mark.skipif(not online(), reason="set LOWLYING_ONLINE=1 to contact the database")
def test_live_maass_form():
    forms = fetch_forms("maass", 1, 1, 200, client=LmfdbClient())
    src = forms[0]
    assert abs(src.coefficient(2) * src.coefficient(3) - src.coefficient(6)) <= 1e-6
    r = explicit_formula_check(src, make_test_triangle(1.0), 100.0)
    assert r.gap <= r.truncation + 0.05
    assert math.isfinite(r.zero_side)

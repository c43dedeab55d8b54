"""Client and on-disk cache for Hecke eigenvalue and zero data from the LMFDB JSON API.

Responses are cached under ``$LOWLYING_CACHE_DIR`` (default ``~/.cache/lowlying``)
in files named by the SHA-256 of the request, written atomically.  A cached
payload that fails to parse or to validate is moved to ``quarantine/`` and
never used.  Endpoints and field names are configuration values because the
public API is not versioned.
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Mapping

import httpx
import numpy as np

from .errors import InsufficientDataError, InvariantError, NetworkError, SchemaError
from .kuznetsov import prime_sum_side
from .ntcore import divisors, primes_up_to
from .transforms import TestFunction

log = logging.getLogger(__name__)

HECKE_TOL = 1e-6
KIM_SARNAK_EXPONENT = 7 / 64

DEFAULT_ENDPOINTS = {
    "api_base_url": "https://www.lmfdb.org",
    "maass_query_path": "/api/maass_newforms/",
    "newform_query_path": "/api/mf_newforms/",
    "zeros_query_path": "/api/lfunc_lfunctions/",
}

# field names inside the JSON records; override through the same config mapping
DEFAULT_FIELDS = {
    "maass_label_field": "maass_label",
    "maass_spectral_field": "spectral_parameter",
    "maass_symmetry_field": "symmetry",
    "maass_coefficients_field": "coefficients",
    "newform_label_field": "label",
    "newform_weight_field": "weight",
    "newform_traces_field": "traces",
    "newform_fricke_field": "fricke_eigenvalue",
    "zeros_origin_field": "origin",
    "zeros_field": "positive_zeros",
    "maass_origin_prefix": "ModularForm/GL2/Q/Maass/",
    "newform_origin_prefix": "ModularForm/GL2/Q/holomorphic/",
}


def cache_dir() -> Path:
    return Path(os.environ.get("LOWLYING_CACHE_DIR", Path.home() / ".cache" / "lowlying"))


# ---------------------------------------------------------------------------
# data type
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HeckeEigenvalueSource:
    """Normalised Hecke eigenvalues lambda(1..n_max) and positive zero ordinates of one form.

    ``spectral_parameter`` is t_f for Maass forms and the weight k for
    holomorphic ones.
    """

    label: str
    kind: str
    spectral_parameter: float
    sign: int
    coefficients: tuple[float, ...]
    zeros: tuple[float, ...] = ()
    fetched_at: str = ""

    @property
    def n_max(self) -> int:
        return len(self.coefficients)

    def coefficient(self, n: int) -> float:
        if not 1 <= n <= self.n_max:
            raise InsufficientDataError(f"lambda({n}) not available for {self.label}")
        return self.coefficients[n - 1]

    def validate(self, tol: float = HECKE_TOL) -> None:
        """Raise InvariantError unless lambda(1) = 1, the Hecke relations and Kim-Sarnak hold."""
        if self.kind not in ("maass", "holomorphic"):
            raise InvariantError(f"unknown kind {self.kind!r}")
        if self.sign not in (1, -1):
            raise InvariantError(f"sign must be +1 or -1, got {self.sign}")
        if self.n_max == 0:
            return
        if abs(self.coefficients[0] - 1) > tol:
            raise InvariantError(f"{self.label}: lambda(1) = {self.coefficients[0]}")
        worst = hecke_residual(self.coefficients)
        if worst > tol:
            raise InvariantError(f"{self.label}: Hecke relation violated by {worst:.2e}")
        if self.kind == "maass":
            for p in primes_up_to(self.n_max).tolist():
                if abs(self.coefficient(p)) > 2 * p**KIM_SARNAK_EXPONENT + tol:
                    raise InvariantError(f"{self.label}: |lambda({p})| breaks the Kim-Sarnak bound")
        if any(g <= 0 for g in self.zeros):
            raise InvariantError(f"{self.label}: zero ordinates must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "HeckeEigenvalueSource":
        d = json.loads(text)
        return cls(d["label"], d["kind"], float(d["spectral_parameter"]), int(d["sign"]),
                   tuple(float(x) for x in d["coefficients"]), tuple(float(x) for x in d["zeros"]),
                   d.get("fetched_at", ""))


def hecke_residual(coefficients) -> float:
    """max |lambda(m) lambda(n) - sum_{d | (m,n)} lambda(mn/d^2)| over mn <= n_max."""
    lam = np.concatenate([[0.0], np.asarray(coefficients, dtype=float)])
    n_max = lam.size - 1
    worst = 0.0
    for m in range(2, n_max + 1):
        for n in range(m, n_max // m + 1):
            g = math.gcd(m, n)
            rhs = sum(lam[m * n // (d * d)] for d in divisors(g))
            worst = max(worst, abs(lam[m] * lam[n] - rhs))
    return worst


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------


class _Politeness:
    """At most ``concurrency`` requests in flight and ``spacing`` seconds between starts."""

    def __init__(self, spacing: float = 0.5, concurrency: int = 2):
        self.spacing = spacing
        self._sem = threading.Semaphore(concurrency)
        self._lock = threading.Lock()
        self._last = 0.0

    def __enter__(self):
        self._sem.acquire()
        with self._lock:
            wait = self._last + self.spacing - time.monotonic()
            if wait > 0:
                time.sleep(wait)
            self._last = time.monotonic()
        return self

    def __exit__(self, *exc):
        self._sem.release()
        return False


@dataclass
class LmfdbClient:
    """HTTP access with retries, politeness and a content-addressed response cache."""

    config: Mapping[str, Any] = field(default_factory=dict)
    transport: httpx.BaseTransport | None = None
    offline: bool = False
    retries: int = 3
    backoff: float = 1.0
    spacing: float = 0.5
    timeout: float = 30.0
    network_calls: int = 0

    def __post_init__(self):
        self.settings = {**DEFAULT_ENDPOINTS, **DEFAULT_FIELDS,
                         **{k: v for k, v in self.config.items() if v is not None}}
        self._polite = _Politeness(self.spacing, 2)
        self._client = httpx.Client(transport=self.transport, timeout=self.timeout,
                                    follow_redirects=True)

    def close(self) -> None:
        self._client.close()

    # -- cache --------------------------------------------------------------

    @staticmethod
    def request_key(path: str, params: Mapping[str, Any]) -> str:
        canon = json.dumps({"path": path, "params": dict(sorted(params.items()))}, sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()

    def _cache_path(self, key: str) -> Path:
        return cache_dir() / "responses" / key[:2] / f"{key}.json"

    def _quarantine(self, path: Path, reason: str) -> None:
        target = cache_dir() / "quarantine" / path.name
        target.parent.mkdir(parents=True, exist_ok=True)
        os.replace(path, target)
        log.warning("quarantined cache entry %s: %s", path.name, reason)

    def _write_atomic(self, path: Path, data: bytes) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(f".tmp{os.getpid()}.{threading.get_ident()}")
        tmp.write_bytes(data)
        os.replace(tmp, path)

    # -- requests -----------------------------------------------------------

    def get_json(self, path_key: str, params: Mapping[str, Any]) -> tuple[Any, bytes]:
        """Decoded JSON and raw bytes for a configured endpoint, from cache when possible."""
        path = self.settings[path_key]
        key = self.request_key(path, params)
        cached = self._cache_path(key)
        if cached.exists():
            raw = cached.read_bytes()
            try:
                return json.loads(raw), raw
            except json.JSONDecodeError as exc:
                self._quarantine(cached, f"invalid JSON: {exc}")
        if self.offline:
            raise NetworkError(f"offline and no cached response for {path} {dict(params)}")
        raw = self._fetch(self.settings["api_base_url"].rstrip("/") + path, params)
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"response from {path} is not JSON: {exc}") from exc
        self._write_atomic(cached, raw)
        return data, raw

    def cached_at(self, path_key: str, params: Mapping[str, Any]) -> str:
        """UTC time the cached response was written, which is when it was fetched."""
        cached = self._cache_path(self.request_key(self.settings[path_key], params))
        if not cached.exists():
            return ""
        stamp = _dt.datetime.fromtimestamp(cached.stat().st_mtime, _dt.timezone.utc)
        return stamp.replace(microsecond=0).isoformat()

    def invalidate(self, path_key: str, params: Mapping[str, Any], reason: str) -> None:
        cached = self._cache_path(self.request_key(self.settings[path_key], params))
        if cached.exists():
            self._quarantine(cached, reason)

    def _fetch(self, url: str, params: Mapping[str, Any]) -> bytes:
        last: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._polite:
                    self.network_calls += 1
                    r = self._client.get(url, params=dict(params))
                if r.status_code >= 500 or r.status_code == 429:
                    last = NetworkError(f"HTTP {r.status_code} from {url}")
                    continue
                if r.status_code >= 400:
                    raise NetworkError(f"HTTP {r.status_code} from {url}")
                return r.content
            except httpx.HTTPError as exc:
                last = exc
        raise NetworkError(f"{url} unreachable after {self.retries} attempts: {last}")


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------


def _records(payload: Any) -> list[dict]:
    if isinstance(payload, dict) and isinstance(payload.get("data"), list):
        recs = payload["data"]
    elif isinstance(payload, list):
        recs = payload
    else:
        raise SchemaError("expected a JSON list or an object with a 'data' list")
    if not all(isinstance(r, dict) for r in recs):
        raise SchemaError("records must be JSON objects")
    return recs


def _require(rec: dict, key: str):
    if key not in rec or rec[key] is None:
        raise SchemaError(f"record lacks field {key!r}")
    return rec[key]


def _as_real(x) -> float:
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(v, (int, float)) for v in x):
        if abs(x[1]) > 1e-6:
            raise SchemaError(f"coefficient {x} is not real")
        return float(x[0])
    if isinstance(x, str):
        try:
            return float(x)
        except ValueError as exc:
            raise SchemaError(f"cannot parse coefficient {x!r}") from exc
    raise SchemaError(f"cannot parse coefficient {x!r}")


def parse_maass(rec: dict, s: Mapping[str, str], n_max: int) -> HeckeEigenvalueSource:
    label = str(_require(rec, s["maass_label_field"]))
    t = float(_require(rec, s["maass_spectral_field"]))
    sym = int(_require(rec, s["maass_symmetry_field"]))
    coeffs = _require(rec, s["maass_coefficients_field"])
    if not isinstance(coeffs, list):
        raise SchemaError("coefficients must be a list")
    lam = [_as_real(c) for c in coeffs]
    # some tables start at index 0 with a placeholder
    if len(lam) > 1 and abs(lam[0]) < 1e-12 and abs(lam[1] - 1) < 1e-6:
        lam = lam[1:]
    return HeckeEigenvalueSource(label, "maass", t, 1 if sym == 0 else -1, tuple(lam[:n_max]))


def parse_newform(rec: dict, s: Mapping[str, str], n_max: int) -> HeckeEigenvalueSource:
    label = str(_require(rec, s["newform_label_field"]))
    k = int(_require(rec, s["newform_weight_field"]))
    traces = _require(rec, s["newform_traces_field"])
    if not isinstance(traces, list):
        raise SchemaError("traces must be a list")
    a = [_as_real(c) for c in traces]
    if a and a[0] == 0 and len(a) > 1:
        a = a[1:]
    lam = tuple(a[n - 1] / n ** ((k - 1) / 2) for n in range(1, min(n_max, len(a)) + 1))
    fricke = rec.get(s["newform_fricke_field"])
    sign = (-1) ** (k // 2) * (int(fricke) if fricke in (1, -1) else 1)
    return HeckeEigenvalueSource(label, "holomorphic", float(k), sign, lam)


def _form_path(label: str) -> Path:
    key = hashlib.sha256(label.encode()).hexdigest()
    return cache_dir() / "forms" / key[:2] / f"{key}.json"


def save_source(src: HeckeEigenvalueSource) -> Path:
    """Persist one validated form as its own JSON document, replaced atomically."""
    path = _form_path(src.label)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(f".tmp{os.getpid()}.{threading.get_ident()}")
    tmp.write_text(src.to_json())
    os.replace(tmp, path)
    return path


def load_source(label: str) -> HeckeEigenvalueSource | None:
    """Stored form for ``label``, re-validated; corrupt or invalid documents are quarantined."""
    path = _form_path(label)
    if not path.exists():
        return None
    try:
        src = HeckeEigenvalueSource.from_json(path.read_text())
        if src.label != label:
            raise InvariantError(f"stored label {src.label!r} does not match {label!r}")
        src.validate()
        return src
    except (ValueError, KeyError, TypeError, InvariantError) as exc:
        target = cache_dir() / "quarantine" / path.name
        target.parent.mkdir(parents=True, exist_ok=True)
        os.replace(path, target)
        log.warning("quarantined stored form %s: %s", label, exc)
        return None


def fetch_forms(kind: str, level: int, count: int, n_max: int, *, client: LmfdbClient | None = None,
                with_zeros: bool = True) -> list[HeckeEigenvalueSource]:
    """Fetch, validate and cache up to ``count`` forms of the given kind and level.

    A payload that parses but fails validation is quarantined and the error
    re-raised: data is rejected, never silently accepted.
    """
    if level < 1:
        raise SchemaError("level must be >= 1")
    if count <= 0:
        return []
    own = client is None
    client = client or LmfdbClient()
    try:
        s = client.settings
        if kind == "maass":
            path_key, parse = "maass_query_path", parse_maass
            params = {"level": level, "_format": "json", "_limit": count,
                      "_sort": s["maass_spectral_field"]}
        elif kind == "holomorphic":
            path_key, parse = "newform_query_path", parse_newform
            params = {"level": level, "dim": 1, "_format": "json", "_limit": count}
        else:
            raise SchemaError(f"unknown kind {kind!r}")
        payload, _ = client.get_json(path_key, params)
        out = []
        try:
            for rec in _records(payload)[:count]:
                src = parse(rec, s, n_max)
                src = dataclasses.replace(src, fetched_at=client.cached_at(path_key, params))
                if with_zeros:
                    src = _attach_zeros(client, src)
                src.validate()
                save_source(src)
                out.append(src)
        except (SchemaError, InvariantError) as exc:
            client.invalidate(path_key, params, str(exc))
            raise
        return out
    finally:
        if own:
            client.close()


def _attach_zeros(client: LmfdbClient, src: HeckeEigenvalueSource) -> HeckeEigenvalueSource:
    s = client.settings
    prefix = s["maass_origin_prefix"] if src.kind == "maass" else s["newform_origin_prefix"]
    params = {s["zeros_origin_field"]: prefix + src.label.replace(".", "/"), "_format": "json"}
    payload, _ = client.get_json("zeros_query_path", params)
    recs = _records(payload)
    zeros: tuple[float, ...] = ()
    if recs:
        raw = recs[0].get(s["zeros_field"]) or []
        zeros = tuple(sorted(_as_real(z) for z in raw))
    return HeckeEigenvalueSource(src.label, src.kind, src.spectral_parameter, src.sign,
                                 src.coefficients, zeros, src.fetched_at)


# ---------------------------------------------------------------------------
# explicit formula
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExplicitFormulaResult:
    zero_side: float
    prime_side: float
    gap: float
    truncation: float
    zeros_used: int


def _zero_density(gamma: np.ndarray, t_f: float) -> np.ndarray:
    """Approximate density of zeros of a degree-2 L-function at height gamma."""
    local = np.log((np.abs(gamma + t_f) + 2) * (np.abs(gamma - t_f) + 2) / (4 * np.pi**2))
    return np.maximum(local, 1.0) / (2 * np.pi)


def zero_truncation_estimate(phi: TestFunction, X: float, gamma_last: float, t_f: float) -> float:
    """2 int_{gamma_last}^inf sup_{y >= x} |phi(y log X / 2 pi)| density(x) dx, integrated numerically."""
    scale = math.log(X) / (2 * math.pi)
    g = np.linspace(gamma_last, gamma_last + 2000, 40001)
    vals = np.abs(np.real(phi(g * scale)))
    env = np.maximum.accumulate(vals[::-1])[::-1]
    dens = _zero_density(g, t_f)
    body = float(np.trapezoid(env * dens, g))
    # beyond the grid use |phi| <= env_end (x_end / x)^2
    x_end = g[-1]
    tail = env[-1] * x_end**2 * float(dens[-1]) / x_end * 2
    return float(2 * (body + tail))


def explicit_formula_check(source: HeckeEigenvalueSource, phi: TestFunction, X: float,
                           zeros_used: int | None = None) -> ExplicitFormulaResult:
    """Zero side sum over +-gamma of phi(gamma log X / 2 pi) against the prime side."""
    zeros = np.asarray(source.zeros, dtype=float)
    if zeros.size < 10:
        raise InsufficientDataError(f"{source.label} has {zeros.size} zeros, need at least 10")
    if zeros_used is not None:
        zeros = zeros[:zeros_used]
    scale = math.log(X) / (2 * math.pi)
    zero_side = 2 * float(np.sum(np.real(phi(zeros * scale))))
    prime = prime_sum_side(phi, X, source)
    t_f = source.spectral_parameter if source.kind == "maass" else 0.0
    trunc = zero_truncation_estimate(phi, X, float(zeros[-1]), t_f)
    return ExplicitFormulaResult(zero_side, prime, abs(zero_side - prime), trunc, int(zeros.size))

"""Command-line entry point: one subcommand per pipeline, JSON or CSV reports.

Settings resolve as flags > flat ``key = value`` config file > defaults, and
every report embeds the resolved configuration and the package version so
identical inputs give byte-identical output.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, field, is_dataclass
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .errors import (BudgetError, DomainError, InsufficientDataError, InvariantError, LowLyingError,
                     NetworkError, SchemaError)
from .ntcore import is_prime

EXIT_OK, EXIT_DOMAIN, EXIT_BUDGET, EXIT_NETWORK, EXIT_USAGE = 0, 1, 2, 3, 64

log = logging.getLogger("lowlying")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings of one invocation; ``params`` holds subcommand-specific values."""

    subcommand: str
    sigma: float = 1.0
    h_id: str = "gauss"
    phi_id: str = "triangle"
    N_list: tuple[int, ...] = (101,)
    c_max_multiplier: int = 40
    epsilon: float = 0.1
    k: int | None = None
    seed: int = 0
    output_path: str | None = None
    output_format: str = "json"
    offline: bool = False
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.sigma < 2:
            raise DomainError(f"sigma must lie in (0, 2), got {self.sigma}")
        bad = [N for N in self.N_list if not is_prime(N)]
        if bad:
            raise DomainError(f"levels must be prime: {bad}")
        if self.output_format not in ("csv", "json"):
            raise DomainError("format must be csv or json")
        if self.k is not None and (self.k < 2 or self.k % 2):
            raise DomainError(f"weight k must be even and >= 2, got {self.k}")
        if self.threads < 1:
            raise DomainError("threads must be >= 1")

    def as_dict(self) -> dict:
        d = asdict(self)
        d["N_list"] = list(self.N_list)
        # the destination does not change the result
        d.pop("output_path")
        return d


COMMON_KEYS = {"sigma": float, "h_id": str, "phi_id": str, "N_list": None, "c_max_multiplier": int,
               "epsilon": float, "k": int, "seed": int, "output_path": str, "output_format": str,
               "offline": None, "threads": int}


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(text).replace(",", " ").split())


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` document; ``#`` starts a comment line."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_string("[run]\n" + fh.read())
    except (OSError, configparser.Error) as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    return dict(parser["run"])


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Param:
    flag: str
    kind: Callable
    default: Any
    help: str


def _p(flag, kind, default, help_text=""):
    return Param(flag, kind, default, help_text)


SUBCOMMANDS: dict[str, tuple[str, list[Param]]] = {
    "density": ("one-level density from the geometric side", []),
    "kuznetsov-check": ("geometric side of the trace formula", [
        _p("m", int, 1, "first index"), _p("n", int, 1, "second index"),
        _p("level", int, None, "level (1 or prime); defaults to the first --N")]),
    "hplus": ("H+ transform by integral and residue series", [
        _p("x", _float_list, (0.01, 0.1, 0.5, 1.0), "evaluation points"),
        _p("terms", int, None, "residue-series terms")]),
    "mellin": ("Mellin transform Psi(s) on a vertical line", [
        _p("re", float, 0.0, "real part of s"), _p("t", _float_list, (0.0, 1.0, 5.0), "imaginary parts of s"),
        _p("c", int, 1, "modulus c")]),
    "hb-verify": ("Heath-Brown identity against Lambda(n)", [
        _p("z", int, 3, "truncation of mu"), _p("K", int, 20, "number of factors"),
        _p("nmax", int, 10_000, "largest n checked"), _p("tol", float, 1e-8, "allowed residual")]),
    "split-lemma": ("greedy splitting witnesses", [
        _p("exhaustive", _bool, False, "exhaustive grid family instead of random tuples"),
        _p("grid", int, 80, "exponent lattice denominator"), _p("max_active", int, 5, "active exponents"),
        _p("count", int, 100_000, "random tuples")]),
    "lsieve": ("large sieve inequality on random data", [
        _p("trials", int, 1000, "number of trials"), _p("d_max", int, 100, "largest modulus"),
        _p("X_max", int, 1000, "largest length")]),
    "fourth-moment": ("fourth moment of a Dirichlet polynomial over characters", [
        _p("d", int, 3, "modulus"), _p("X", int, 10, "length"), _p("kind", str, "one", "coefficients"),
        _p("t_max", float, 100.0, "height cutoff"),
        _p("method", str, "auto", "exact, quadrature or auto")]),
    "grand-density": ("zero-density count against the conjectured bound", [
        _p("Q", int, 5, "modulus bound"), _p("T", float, 10.0, "height"), _p("beta", float, 0.9, "abscissa")]),
    "zeros": ("zeros of a primitive Dirichlet L-function in a box", [
        _p("q", int, 7, "modulus"), _p("index", int, 1, "index in the character group"),
        _p("T", float, 10.0, "height"), _p("beta", float, 0.5, "abscissa")]),
    "fetch": ("fetch and cache Hecke eigenvalues", [
        _p("kind", str, "maass", "maass or holomorphic"), _p("level", int, 1, "level"),
        _p("count", int, 1, "number of forms"), _p("nmax", int, 1000, "coefficients per form"),
        _p("zeros", _bool, True, "also fetch zeros")]),
    "explicit-formula": ("explicit formula for a fetched level-1 form", [
        _p("kind", str, "maass", "maass or holomorphic"), _p("X", float, 100.0, "scale"),
        _p("nmax", int, 1000, "coefficients to fetch"), _p("zeros_used", int, None, "zeros to use")]),
}

NETWORK_KEYS = ("api_base_url", "maass_query_path", "newform_query_path", "zeros_query_path")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lowlying", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name, (help_text, params) in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=help_text, description=help_text)
        g = sp.add_argument_group("common")
        S = argparse.SUPPRESS
        g.add_argument("--config", default=S, help="flat key = value config file")
        g.add_argument("--sigma", type=float, default=S, help="support of phi-hat, in (0, 2)")
        g.add_argument("--h", dest="h_id", default=S, help="spectral weight id (gauss)")
        g.add_argument("--phi", dest="phi_id", default=S, help="test function id (triangle, bump)")
        g.add_argument("--N", dest="N_list", type=int, nargs="+", default=S, help="prime levels")
        g.add_argument("--c-max-multiplier", dest="c_max_multiplier", type=int, default=S)
        g.add_argument("--epsilon", type=float, default=S)
        g.add_argument("--k", type=int, default=S, help="holomorphic weight")
        g.add_argument("--seed", type=int, default=S)
        g.add_argument("--threads", type=int, default=S)
        g.add_argument("--output", dest="output_path", default=S)
        g.add_argument("--format", dest="output_format", choices=("csv", "json"), default=S)
        g.add_argument("--offline", action="store_const", const=True, default=S)
        for key in NETWORK_KEYS:
            g.add_argument("--" + key.replace("_", "-"), dest=key, default=S)
        for p in params:
            flag = "--" + p.flag.replace("_", "-")
            if p.kind is _bool:
                sp.add_argument(flag, dest=p.flag, nargs="?", const=True, type=_bool, default=S, help=p.help)
            elif p.kind in (_float_list, _int_list):
                elem = float if p.kind is _float_list else int
                sp.add_argument(flag, dest=p.flag, nargs="+", type=elem, default=S, help=p.help)
            else:
                sp.add_argument(flag, dest=p.flag, type=p.kind, default=S, help=p.help)
    return parser


def resolve_config(argv: Sequence[str]) -> RunConfig:
    ns = vars(build_parser().parse_args(list(argv)))
    name = ns.pop("subcommand")
    file_values = read_config_file(ns.pop("config")) if "config" in ns else {}
    specs = {p.flag: p for p in SUBCOMMANDS[name][1]}
    common: dict[str, Any] = {}
    params: dict[str, Any] = {p.flag: p.default for p in specs.values()}
    network: dict[str, Any] = {}

    def convert(key, value, from_file):
        if key in COMMON_KEYS:
            if key == "N_list":
                return _int_list(value) if from_file else tuple(value)
            if key == "offline":
                return _bool(value)
            return COMMON_KEYS[key](value) if from_file else value
        if key in specs:
            kind = specs[key].kind
            if not from_file:
                return tuple(value) if kind in (_float_list, _int_list) else value
            return kind(value)
        if key in NETWORK_KEYS:
            return str(value)
        raise UsageError(f"unknown setting {key!r} for {name}")

    for source, from_file in ((file_values, True), (ns, False)):
        for key, value in source.items():
            try:
                v = convert(key, value, from_file)
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key}: {value!r}") from exc
            if key in COMMON_KEYS:
                common[key] = v
            elif key in specs:
                params[key] = v
            else:
                network[key] = v
    if network:
        params["endpoints"] = dict(sorted(network.items()))
    return RunConfig(subcommand=name, params=params, **common)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _plain(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return {k: _plain(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


@dataclass
class Report:
    summary: dict
    rows: list[dict] = field(default_factory=list)
    ok: bool = True


def render(cfg: RunConfig, report: Report) -> str:
    if cfg.output_format == "json":
        doc = {"artifact_version": __version__, "config": _plain(cfg.as_dict()),
               "summary": _plain(report.summary), "rows": _plain(report.rows)}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    buf.write(f"# artifact_version {__version__}\n")
    buf.write("# config " + json.dumps(_plain(cfg.as_dict()), sort_keys=True) + "\n")
    buf.write("# summary " + json.dumps(_plain(report.summary), sort_keys=True) + "\n")
    rows = _plain(report.rows) or [_plain(report.summary)]
    cols = list(rows[0].keys())
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: json.dumps(v) if isinstance(v, (list, dict)) else v for k, v in r.items()})
    return buf.getvalue()


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _weight(cfg: RunConfig):
    from .transforms import make_weight_gaussian
    if cfg.h_id != "gauss":
        raise DomainError(f"unknown spectral weight {cfg.h_id!r}")
    return make_weight_gaussian()


def _test_function(cfg: RunConfig):
    from .transforms import make_test_bump, make_test_triangle
    makers = {"triangle": make_test_triangle, "bump": make_test_bump}
    if cfg.phi_id not in makers:
        raise DomainError(f"unknown test function {cfg.phi_id!r}")
    return makers[cfg.phi_id](cfg.sigma)


def cmd_density(cfg: RunConfig) -> Report:
    from .kuznetsov import DENSITY_CSV_COLUMNS, density_geometric
    phi, h = _test_function(cfg), _weight(cfg)
    rows = []
    for N in cfg.N_list:
        r = density_geometric(phi, h, N, cfg.c_max_multiplier * N)
        d = _plain(r)
        rows.append({**{c: d[c] for c in DENSITY_CSV_COLUMNS}, **d})
    return Report({"levels": list(cfg.N_list), "max_deviation": max(r["deviation"] for r in rows)}, rows)


def cmd_kuznetsov(cfg: RunConfig) -> Report:
    from .kuznetsov import delta_full, delta_level_one
    p = cfg.params
    level = p["level"] if p["level"] is not None else cfg.N_list[0]
    h = _weight(cfg)
    if level == 1:
        r = delta_level_one(p["m"], p["n"], h)
    else:
        r = delta_full(p["m"], p["n"], level, h, cfg.c_max_multiplier * level)
    return Report(_plain(r))


def cmd_hplus(cfg: RunConfig) -> Report:
    from .transforms import hplus_linear_constant, hplus_many, hplus_series
    h = _weight(cfg)
    x = np.array(cfg.params["x"], dtype=float)
    integral = hplus_many(h, x, check_domain=False)
    series = hplus_series(h, x, terms=cfg.params["terms"])
    rows = [{"x": xi, "integral": a, "series": b, "difference": abs(a - b)}
            for xi, a, b in zip(x, integral, series)]
    return Report({"h_id": cfg.h_id, "linear_constant": hplus_linear_constant(h)}, rows)


def cmd_mellin(cfg: RunConfig) -> Report:
    from .transforms import MellinQuery, mellin_psi, mellin_psi_flat
    p = cfg.params
    s = p["re"] + 1j * np.array(p["t"], dtype=float)
    phi = _test_function(cfg)
    scale = cfg.N_list[0]
    if cfg.k is None:
        vals = mellin_psi(MellinQuery(s, scale, p["c"]), phi, _weight(cfg))
    else:
        vals = mellin_psi_flat(MellinQuery(s, scale, p["c"], cfg.k), phi)
    vals = np.atleast_1d(vals)
    rows = [{"re": p["re"], "t": t, "psi_re": v.real, "psi_im": v.imag, "abs": abs(v)}
            for t, v in zip(p["t"], vals)]
    return Report({"kind": "maass" if cfg.k is None else cfg.k, "scale": scale, "c": p["c"]}, rows)


def cmd_hb(cfg: RunConfig) -> Report:
    from .dirpoly import heath_brown_check
    p = cfg.params
    res = heath_brown_check(p["nmax"], p["z"], p["K"])
    ok = res <= p["tol"]
    return Report({"z": p["z"], "K": p["K"], "nmax": p["nmax"], "max_residual": res, "passed": ok}, ok=ok)


def cmd_split(cfg: RunConfig) -> Report:
    from .dirpoly import (greedy_witness_batch, grid_family, holomorphic_thresholds, maass_thresholds,
                          random_admissible, witness_exists_batch)
    p = cfg.params
    th = maass_thresholds(cfg.epsilon) if cfg.k is None else holomorphic_thresholds(cfg.epsilon, cfg.k)
    if p["exhaustive"]:
        a = grid_family(p["grid"], p["max_active"], th.total)
        oracle = witness_exists_batch(a, th)
        family = "grid"
    else:
        rng = np.random.default_rng(cfg.seed)
        a = random_admissible(p["count"], cfg.epsilon, rng, total=th.total + cfg.epsilon)
        oracle = None
        family = "random"
    kind = greedy_witness_batch(a, th)
    failures = int(np.sum(kind == 0))
    summary = {"family": family, "tuples": int(a.shape[0]), "case_a": int(np.sum(kind == 1)),
               "case_b": int(np.sum(kind == 2)), "failures": failures,
               "thresholds": _plain(th), "mode": "maass" if cfg.k is None else f"holomorphic k={cfg.k}"}
    if oracle is not None:
        summary["oracle_no_witness"] = int(np.sum(~oracle))
    return Report(summary, ok=failures == 0)


def cmd_lsieve(cfg: RunConfig) -> Report:
    from .dirpoly import large_sieve_check
    p = cfg.params
    rng = np.random.default_rng(cfg.seed)
    worst, violations = 0.0, 0
    for _ in range(p["trials"]):
        d = int(rng.integers(2, p["d_max"] + 1))
        X = int(rng.integers(1, p["X_max"] + 1))
        a = rng.standard_normal(X) + 1j * rng.standard_normal(X)
        lhs, rhs = large_sieve_check(d, X, a)
        worst = max(worst, lhs / rhs)
        violations += lhs > rhs * (1 + 1e-12)
    return Report({"trials": p["trials"], "violations": int(violations), "max_ratio": worst},
                  ok=violations == 0)


def cmd_fourth(cfg: RunConfig) -> Report:
    from .dirpoly import fourth_moment_integral
    p = cfg.params
    r = fourth_moment_integral(p["d"], p["X"], p["kind"], p["t_max"], method=p["method"])
    return Report({"d": p["d"], "X": p["X"], "kind": p["kind"], **_plain(r)})


def cmd_grand(cfg: RunConfig) -> Report:
    from .dirpoly import grand_density_ratio
    p = cfg.params
    k = cfg.k if cfg.k is not None else 1
    r = grand_density_ratio(p["Q"], k, p["T"], p["beta"])
    return Report({"Q": p["Q"], "k": k, "T": p["T"], "beta": p["beta"], **_plain(r)})


def cmd_zeros(cfg: RunConfig) -> Report:
    from .ntcore import character_group
    from .specfun import ZeroCountQuery, zero_count
    p = cfg.params
    group = character_group(p["q"])
    if not 0 <= p["index"] < len(group):
        raise DomainError(f"index must lie in [0, {len(group)})")
    chi = group[p["index"]]
    r = zero_count(ZeroCountQuery(p["beta"], p["T"], chi))
    return Report({"character": chi.label, "q": p["q"], "T": p["T"], "beta": p["beta"], **_plain(r)})


def _client(cfg: RunConfig):
    from .lmfdb import LmfdbClient
    return LmfdbClient(config=cfg.params.get("endpoints", {}), offline=cfg.offline)


def cmd_fetch(cfg: RunConfig) -> Report:
    from .lmfdb import fetch_forms
    p = cfg.params
    client = _client(cfg)
    try:
        forms = fetch_forms(p["kind"], p["level"], p["count"], p["nmax"], client=client, with_zeros=p["zeros"])
    finally:
        client.close()
    rows = [{"label": f.label, "kind": f.kind, "spectral_parameter": f.spectral_parameter, "sign": f.sign,
             "n_max": f.n_max, "zeros": len(f.zeros), "fetched_at": f.fetched_at} for f in forms]
    return Report({"forms": len(forms), "network_calls": client.network_calls}, rows)


def cmd_explicit(cfg: RunConfig) -> Report:
    from .lmfdb import explicit_formula_check, fetch_forms
    p = cfg.params
    client = _client(cfg)
    try:
        forms = fetch_forms(p["kind"], 1, 1, p["nmax"], client=client)
    finally:
        client.close()
    if not forms:
        raise InsufficientDataError("no level-1 form returned")
    r = explicit_formula_check(forms[0], _test_function(cfg), p["X"], p["zeros_used"])
    ok = r.gap <= r.truncation + 0.05
    return Report({"label": forms[0].label, "X": p["X"], **_plain(r), "within_budget": ok})


HANDLERS: dict[str, Callable[[RunConfig], Report]] = {
    "density": cmd_density, "kuznetsov-check": cmd_kuznetsov, "hplus": cmd_hplus, "mellin": cmd_mellin,
    "hb-verify": cmd_hb, "split-lemma": cmd_split, "lsieve": cmd_lsieve, "fourth-moment": cmd_fourth,
    "grand-density": cmd_grand, "zeros": cmd_zeros, "fetch": cmd_fetch, "explicit-formula": cmd_explicit,
}


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, UsageError):
        return EXIT_USAGE
    if isinstance(exc, BudgetError):
        return EXIT_BUDGET
    if isinstance(exc, (NetworkError, SchemaError, InvariantError)):
        return EXIT_NETWORK
    return EXIT_DOMAIN


def run(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg = resolve_config(argv)
        report = HANDLERS[cfg.subcommand](cfg)
    except (UsageError, LowLyingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    text = render(cfg, report)
    if cfg.output_path:
        with open(cfg.output_path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if report.ok else EXIT_DOMAIN


def main() -> None:
    logging.basicConfig(level=os.environ.get("LOWLYING_LOG", "WARNING"))
    sys.exit(run())

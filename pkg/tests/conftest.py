import os

import numpy as np
import pytest

from lowlying.kuznetsov import hecke_power
from lowlying.ntcore import factorize


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("LOWLYING_CACHE_DIR", str(tmp_path / "cache"))
    return tmp_path / "cache"


def synthetic_hecke(n_max: int, seed: int = 0, bound: float = 1.5) -> list[float]:
    """Multiplicative coefficients built from random lambda(p) through the Hecke recursion."""
    rng = np.random.default_rng(seed)
    lam_p: dict[int, float] = {}
    out = [1.0]
    for n in range(2, n_max + 1):
        v = 1.0
        for p, e in factorize(n).items():
            if p not in lam_p:
                lam_p[p] = float(rng.uniform(-bound, bound))
            v *= hecke_power(lam_p[p], e)
        out.append(v)
    return out


def online() -> bool:
    return os.environ.get("LOWLYING_ONLINE", "0") == "1"


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)

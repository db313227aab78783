import numpy as np
import pytest

from dissonance.conformal_maps import Inversion, MoebiusWord, Similarity, compose
from dissonance.ifs import chaos_game, middle_thirds


@pytest.fixture(scope="session")
def cantor_cloud():
    return chaos_game(middle_thirds(), 10**6, seed=7)


@pytest.fixture(scope="session")
def small_cantor():
    return chaos_game(middle_thirds(), 20_000, seed=3)


def moebius_square(center, ratio=0.5):
    """Orientation-preserving non-linear Moebius map: second iterate of inversion-then-scale."""
    m = MoebiusWord([Inversion(center, 1.0), Similarity(ratio, d=len(center))])
    return compose(m, m)


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    """``criterion(k, ok, detail)`` records one acceptance check for the summary."""
    def record(k: int, ok: bool, detail: str) -> bool:
        ACCEPTANCE.setdefault(k, []).append((bool(ok), detail))
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        checks = ACCEPTANCE[k]
        status = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        details = "; ".join(d for _, d in checks)
        terminalreporter.write_line(f"criterion {k:2d}: {status}  {details}")

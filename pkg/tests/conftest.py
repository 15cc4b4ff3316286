import numpy as np
import pytest
from hypothesis import strategies as st

from semanticache import KvCache


def make_cache(keys, values=None, delimiters=None, positions=None, dtype=np.float32):
    keys = np.asarray(keys, dtype=dtype)
    if values is None:
        values = keys.copy()
    return KvCache.from_arrays(keys, np.asarray(values, dtype=dtype), positions, delimiters)


def random_cache(rng, n, d, delim_prob=0.1, dtype=np.float32):
    keys = rng.standard_normal((n, d)).astype(dtype)
    values = rng.standard_normal((n, d)).astype(dtype)
    flags = rng.random(n) < delim_prob
    positions = np.cumsum(rng.integers(1, 4, size=n)) - 1
    return KvCache.from_arrays(keys, values, positions, flags)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def three_key_cache():
    """k0=[1,0], k1=[0.995,0.0999], k2=[0,1] followed by one delimiter."""
    keys = [[1.0, 0.0], [0.995, 0.0999], [0.0, 1.0], [0.3, -0.7]]
    values = [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]]
    return make_cache(keys, values, delimiters=[False, False, False, True])


@st.composite
def caches(draw, max_n=40, max_d=6, clustered=True):
    """Small float32 caches; keys are drawn from a few directions so clusters form."""
    n = draw(st.integers(0, max_n))
    d = draw(st.integers(1, max_d))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    if clustered and n:
        centers = rng.standard_normal((draw(st.integers(1, 4)), d))
        keys = centers[rng.integers(0, len(centers), n)] + draw(st.sampled_from([0.0, 0.05, 0.3])) * rng.standard_normal((n, d))
    else:
        keys = rng.standard_normal((n, d))
    values = rng.standard_normal((n, d))
    flags = rng.random(n) < draw(st.sampled_from([0.0, 0.1, 0.4, 1.0]))
    return KvCache.from_arrays(keys.astype(np.float32), values.astype(np.float32), None, flags)


# -- acceptance reporting: one PASS/FAIL line per criterion ------------------

_ACCEPTANCE: list[tuple[str, str, str]] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when != "call":
        return
    detail = dict(item.user_properties).get("detail", "")
    _ACCEPTANCE.append((marker.args[0], "PASS" if rep.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0].split(".")[0])):
        terminalreporter.write_line(f"{status}  {name}" + (f"  [{detail}]" if detail else ""))

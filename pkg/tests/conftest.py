import numpy as np
import pytest

from urbancool.geometry import box_mesh, write_stl_ascii, write_stl_binary


@pytest.fixture
def unit_cube():
    return box_mesh(0, 0, 0, 1, 1, 1)


@pytest.fixture
def stl_dir(tmp_path):
    """Two unit cubes 10 m apart, as binary STL files."""
    d = tmp_path / "geom"
    d.mkdir()
    write_stl_binary(box_mesh(0, 0, 0, 1, 1, 1), d / "b001.stl")
    write_stl_binary(box_mesh(11, 0, 0, 12, 1, 1), d / "b002.stl")
    return d


def pytest_configure(config):
    np.seterr(all="ignore")


def canyon_params(month=4, day=15, **user):
    """Resolved parameters for the synthetic tropical climate on one day."""
    from urbancool import params as P, weather

    site = weather.CHANGI
    records = [r for r in _synthetic_year() if r.month == month and r.day == day]
    climate = P.climate_partial(site, records, lambda r: weather.complete_irradiance(site, r, 2001))
    advisor = {"run.month": month, "run.day": day}
    return P.merge(P.load_defaults(), climate, None, advisor, user)


_YEAR = []


def _synthetic_year():
    from urbancool import fixtures

    if not _YEAR:
        _YEAR.extend(fixtures.synthetic_records())
    return _YEAR


@pytest.fixture(scope="session")
def canyon_dir(tmp_path_factory):
    from urbancool import fixtures

    return fixtures.write_canyon(tmp_path_factory.mktemp("canyon"))


@pytest.fixture(scope="session")
def canyon_context(canyon_dir):
    from urbancool.geometry import build_index
    from urbancool.simulation import SimulationContext

    params = canyon_params()
    return SimulationContext.build(build_index(canyon_dir), params), params


@pytest.fixture(scope="session")
def canyon_baseline(canyon_context):
    from urbancool.simulation import simulate

    ctx, params = canyon_context
    return simulate(ctx, params)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Context manager recording one PASS/FAIL line per acceptance criterion."""
    import contextlib
    import time

    @contextlib.contextmanager
    def run(number: int, title: str, budget_s: float | None = None):
        start = time.perf_counter()
        try:
            yield
            elapsed = time.perf_counter() - start
            if budget_s is not None:
                assert elapsed < budget_s, f"took {elapsed:.1f} s, budget {budget_s:.0f} s"
        except BaseException as exc:
            line = f"FAIL criterion {number}: {title} ({str(exc).splitlines()[0] if str(exc) else type(exc).__name__})"
            _ACCEPTANCE[number] = line
            print(line)
            raise
        line = f"PASS criterion {number}: {title} ({time.perf_counter() - start:.2f} s)"
        _ACCEPTANCE[number] = line
        print(line)

    return run


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])

import numpy as np
import pytest

from timber_reuse.nuts import SamplerConfig
from timber_reuse.simulate import simulate_specimens
from timber_reuse.workflow import RunConfig, fit, simulate_csv, write_fit

QUICK = SamplerConfig(n_chains=2, n_warmup=150, n_draws=100, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def replica_records():
    return simulate_specimens(seed=3, n_per_group=10)


@pytest.fixture(scope="session")
def replica_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "replica.csv"
    path.write_text(simulate_csv(3, 10), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def quick_fit_dir(tmp_path_factory, replica_csv):
    """A short two-chain fit written to disk, shared by artifact tests."""
    out = tmp_path_factory.mktemp("fit")
    result = fit(RunConfig(input=replica_csv, out_dir=out, sampler=QUICK))
    write_fit(result, out)
    return out


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one (criterion, passed, detail) line per acceptance criterion."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(lines, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")

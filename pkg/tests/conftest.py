import pytest

from spiked_lss import BulkDistribution, PopulationSpectrum, SpikeGroup

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict = {}

DELTA1 = BulkDistribution.point_mass(1.0)

SIMULATION_SPECTRA = {
    1: [(1, 1 / 3, 0), (1, 1 / 3, -1), (1, 1 / 4, -2)],
    2: [(1, 1 / 2, 0), (1, 1 / 3, -1), (1, 1 / 4, -2)],
    3: [(1, 1, 0), (1, 1 / 2, 0), (1, 1 / 3, 0)],
}


def simulation_spectrum(k: int, p: int = 100, n: int = 3000) -> PopulationSpectrum:
    groups = tuple(SpikeGroup(c, e, o, 6) for c, e, o in SIMULATION_SPECTRA[k])
    return PopulationSpectrum(groups, DELTA1, p, n)


@pytest.fixture
def delta1():
    return DELTA1


@pytest.fixture(params=[1, 2, 3], ids=["spectrum1", "spectrum2", "spectrum3"])
def sim_spectrum(request):
    return simulation_spectrum(request.param)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")

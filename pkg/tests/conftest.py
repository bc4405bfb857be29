import numpy as np
import pytest

from ptbands.model import BlochModel, Coefficient, HarmonicTerm, build_paper_model

_criteria = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        number, title = marker.args
        _criteria.append((number, title, call.excinfo is None))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok in sorted(_criteria):
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture
def paper():
    return build_paper_model()


def random_model(rng, pt_symmetric=True, max_order=2, omega=10.0):
    """Random real Fourier model; g1 is left empty when ``pt_symmetric``."""

    def series():
        terms = []
        for m in range(-max_order, max_order + 1):
            for n in range(-max_order, max_order + 1):
                for kind in ("cos", "sin"):
                    if kind == "sin" and m == 0 and n == 0:
                        continue
                    if rng.random() < 0.25:
                        terms.append(HarmonicTerm(m, n, kind, Coefficient(float(rng.normal()))))
        return tuple(terms)

    g1 = () if pt_symmetric else (series() or (HarmonicTerm(0, 0, "cos", Coefficient(0.7)),))
    return BlochModel(g1, series(), series(), omega)


@pytest.fixture
def rng():
    return np.random.default_rng(20161016)

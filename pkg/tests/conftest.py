import pytest
from hypothesis import settings

from torusflow.forcing import ForcingTerm, TrigFunction
from torusflow.harmonics import HarmonicBasis, SphereGrid
from torusflow.torus import FlatTorus

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def t2():
    return FlatTorus.cube(2)


@pytest.fixture(scope="session")
def t3():
    return FlatTorus.cube(3)


@pytest.fixture(scope="session")
def big_t3():
    return FlatTorus.cube(3, 10.0)


@pytest.fixture(scope="session")
def cos2(t2):
    return TrigFunction.cosine_sum(t2)


@pytest.fixture(scope="session")
def cos3(t3):
    return TrigFunction.cosine_sum(t3)


@pytest.fixture(scope="session")
def basis2():
    return HarmonicBasis(SphereGrid.for_degree(2, 12))


@pytest.fixture(scope="session")
def basis1():
    return HarmonicBasis(SphereGrid.for_degree(1, 16))


@pytest.fixture
def unit_F(big_t3):
    return ForcingTerm.constant(1.0, big_t3)


@pytest.fixture(scope="session")
def crit2(cos2):
    from torusflow.morse import find_critical_points

    return find_critical_points(cos2)


@pytest.fixture(scope="session")
def crit3(cos3):
    from torusflow.morse import find_critical_points

    return find_critical_points(cos3)


@pytest.fixture(scope="session")
def complex3(cos3, crit3):
    from torusflow.morse import assemble_complex

    return assemble_complex(cos3, crit3)


@pytest.fixture(scope="session")
def heteroclinic2(cos2, crit2):
    """Max to saddle flow line of the T^2 cosine fixture."""
    from torusflow.morse import heteroclinic_count

    _, reps, _ = heteroclinic_count(crit2[0], crit2[1], cos2)
    return reps[0]


@pytest.fixture(scope="session")
def asym_grid(heteroclinic2, cos2):
    from torusflow.asymptotics import AsymptoticGrid

    return AsymptoticGrid.build(heteroclinic2, cos2, max_degree=12)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion and return the flag."""

    def record(name, ok, detail):
        line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        ACCEPTANCE_LINES.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:].split("/")[0])):
            terminalreporter.write_line(line)

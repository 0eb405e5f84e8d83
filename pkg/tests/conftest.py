import pytest

from wml.morse import adapted_field, build_thom_smale_complex, \
    find_critical_points
from wml.scenarios import get_scenario, scenario_mesh

_FLOW_CACHE = {}
ACCEPTANCE_RESULTS = []


def record_acceptance(number: int, passed: bool, detail: str = ""):
    ACCEPTANCE_RESULTS.append((number, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(
            "CRITERION %d: %s%s" % (number, "PASS" if passed else "FAIL",
                                    " - " + detail if detail else ""))


@pytest.fixture(scope="session")
def flow_data():
    """Cached (scenario, f, criticals, field, complex) per scenario name.

    Flow tracing is the most expensive part of the suite; every test that
    needs a combinatorial complex shares these results.
    """
    def get(name, negate=False):
        key = (name, negate)
        if key not in _FLOW_CACHE:
            sc = get_scenario(name)
            f = sc.f.negated() if negate else sc.f
            domain = sc.domain
            crits = find_critical_points(f, domain)
            field = adapted_field(f, domain, sc.adaptation_radius, crits)
            cx = build_thom_smale_complex(crits, field)
            _FLOW_CACHE[key] = (sc, f, crits, field, cx)
        return _FLOW_CACHE[key]

    return get


@pytest.fixture(scope="session")
def mesh_for():
    def get(name, target_h):
        return scenario_mesh(name, target_h)

    return get

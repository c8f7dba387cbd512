"""Shared fixtures and the acceptance-criteria summary hook."""

import pytest

import potflow as pf


def triangle_network(kind="resistor"):
    """Three nodes, three edges, one chord (e23). Root n1 at potential 10."""
    model = pf.linear_resistor(1.0) if kind == "resistor" else pf.quadratic_pipe(1.0)
    return pf.Network(
        nodes=(
            pf.NodeSpec("n1", 0.0, 20.0, 10.0, 10.0),
            pf.NodeSpec("n2", 0.0, 0.0, 0.1, 20.0),
            pf.NodeSpec("n3", -6.0, -6.0, 0.1, 20.0),
        ),
        edges=(
            pf.EdgeSpec("e12", "n1", "n2", (model,)),
            pf.EdgeSpec("e13", "n1", "n3", (model,)),
            pf.EdgeSpec("e23", "n2", "n3", (model,)),
        ),
        root="n1",
    )


def triangle_iv(chord=0.0):
    return pf.IndependentVariables(
        chord_flows={"e23": chord},
        root_potential=10.0,
        intensities={"n2": 0.0, "n3": -6.0},
        edge_params={},
        edge_choice={"e12": 1, "e13": 1, "e23": 1},
    )


def path_network(n=4, resistance=1.0):
    """Path 1-2-...-n of single resistors, root at node 1."""
    nodes = tuple(
        pf.NodeSpec(f"n{i}", -50.0, 50.0, 0.1, 100.0) for i in range(1, n + 1))
    edges = tuple(
        pf.EdgeSpec(f"e{i}{i+1}", f"n{i}", f"n{i+1}",
                    (pf.linear_resistor(resistance),))
        for i in range(1, n))
    return pf.Network(nodes, edges, "n1")


def two_family_path():
    """Two discrete resistor families in series; root potential free.

    Hand enumeration: drops at flow 4 are {6, 2} on eA and {3, 1} on eB;
    the optimum is choices (1, 1) at root potential 11 with objective 5.
    """
    return pf.Network(
        nodes=(
            pf.NodeSpec("n1", 0.0, 20.0, 9.0, 12.0),
            pf.NodeSpec("n2", 0.0, 0.0, 1.0, 9.0),
            pf.NodeSpec("n3", -4.0, -4.0, 2.0, 6.0,
                        cost=pf.NodeObjective(potential_coeff=1.0)),
        ),
        edges=(
            pf.EdgeSpec("eA", "n1", "n2",
                        (pf.linear_resistor(1.5, cost=1.0),
                         pf.linear_resistor(0.5, cost=3.0))),
            pf.EdgeSpec("eB", "n2", "n3",
                        (pf.linear_resistor(0.75, cost=2.0),
                         pf.linear_resistor(0.25, cost=6.0))),
        ),
        root="n1",
    )


def single_pipe_network(p2_bounds=(6.0, 12.0)):
    """One pipe n1 -> n2, K = 1; demand at n2 is the analyzed parameter."""
    return pf.Network(
        nodes=(
            pf.NodeSpec("n1", 0.0, 20.0, 8.0, 12.0),
            pf.NodeSpec("n2", -20.0, 0.0, p2_bounds[0], p2_bounds[1]),
        ),
        edges=(pf.EdgeSpec("p12", "n1", "n2", (pf.quadratic_pipe(1.0),)),),
        root="n1",
    )


def series_pipes_network():
    """A-B-C quadratic pipes (K=1), raw potential bounds [0.1, 10]."""
    return pf.Network(
        nodes=(
            pf.NodeSpec("A", -50.0, 50.0, 0.1, 10.0),
            pf.NodeSpec("B", -50.0, 50.0, 0.1, 10.0),
            pf.NodeSpec("C", -50.0, 50.0, 0.1, 10.0),
        ),
        edges=(
            pf.EdgeSpec("eAB", "A", "B", (pf.quadratic_pipe(1.0),)),
            pf.EdgeSpec("eBC", "B", "C", (pf.quadratic_pipe(1.0),)),
        ),
        root="A",
    )


@pytest.fixture
def triangle_resistors():
    return triangle_network("resistor")


@pytest.fixture
def triangle_pipes():
    return triangle_network("pipe")


@pytest.fixture
def fixture_d():
    return two_family_path()


@pytest.fixture
def single_pipe():
    return single_pipe_network()


# -- acceptance summary --------------------------------------------------------

_CRITERIA: dict[str, str] = {}


def register_criterion(nodeid: str, label: str):
    _CRITERIA[nodeid.split("::")[-1]] = label


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            name = rep.nodeid.split("::")[-1]
            if "test_acceptance" in rep.nodeid and name.startswith("test_criterion"):
                label = _CRITERIA.get(name, name)
                verdict = "PASS" if status == "passed" else "FAIL"
                lines.append((name, f"{verdict}  {label}"))
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)

"""Stability intervals, Monte Carlo, capacity, interval tightening."""

import math

import numpy as np
import pytest

import potflow as pf
from conftest import series_pipes_network, single_pipe_network


def pipe_case(root_potential=10.0, demand=5.0):
    net = single_pipe_network()
    return pf.StabilityCase(
        network=net,
        intensities={"n2": -demand},
        control=pf.ControlVector(root_potential=root_potential),
    )


def demand_parameter(base, radius=1.0, tolerance=1e-4):
    return pf.ParameterSpec(pf.intensity_parameter("n2", scale=-1.0),
                            base, radius, tolerance)


def test_strong_interval_single_pipe():
    result = pf.strong_stability_interval(pipe_case(), demand_parameter(5.0))
    lo, hi = result.interval
    assert hi == pytest.approx(8.0, abs=1e-4)
    assert lo == pytest.approx(0.0, abs=1e-4)
    assert result.strong_stable


def test_strong_interval_margin_too_small():
    result = pf.strong_stability_interval(pipe_case(demand=7.5),
                                          demand_parameter(7.5))
    assert result.interval[1] == pytest.approx(8.0, abs=1e-4)
    assert not result.strong_stable  # right margin 0.5 < radius 1


def test_strong_interval_base_infeasible():
    with pytest.raises(pf.errors.BaseInfeasible):
        pf.strong_stability_interval(pipe_case(demand=9.0), demand_parameter(9.0))


def control_spec(weight=0.01, eta=0.5, box=(8.0, 12.0)):
    return pf.ControlSpec(
        u0=pf.ControlVector(root_potential=10.0),
        root_box=box,
        root_weight=weight,
        eta=eta,
    )


def test_weak_interval_reaches_recontrolled_limit():
    result = pf.weak_stability_check(pipe_case(), control_spec(),
                                     demand_parameter(5.0))
    assert result.interval[1] == pytest.approx(math.sqrt(108.0), abs=1e-3)
    assert result.interval[1] > 8.0  # strictly beyond the frozen limit
    assert any(p.frozen_reference_approximate for p in result.probes)


def test_weak_collapses_under_huge_switch_cost():
    result = pf.weak_stability_check(pipe_case(), control_spec(weight=1e6),
                                     demand_parameter(5.0))
    assert result.interval[1] == pytest.approx(8.0, abs=1e-3)


def test_weak_singleton_matches_strong():
    spec = pf.ControlSpec(u0=pf.ControlVector(root_potential=10.0), eta=1e9)
    pspec = demand_parameter(5.0)
    weak = pf.weak_stability_check(pipe_case(), spec, pspec)
    strong = pf.strong_stability_interval(pipe_case(), pspec)
    assert weak.interval[0] == pytest.approx(strong.interval[0], abs=2e-4)
    assert weak.interval[1] == pytest.approx(strong.interval[1], abs=2e-4)


def test_weak_witness_controls_reported():
    result = pf.weak_stability_check(pipe_case(), control_spec(),
                                     demand_parameter(5.0))
    beyond = [p for p in result.probes if p.weak and p.pi > 8.5]
    assert beyond
    for probe in beyond:
        # The witness root potential must actually cover the demand.
        need = math.sqrt(36.0 + probe.pi ** 2)
        assert probe.witness_root_potential >= need - 1e-3


def singleton_spec(eta=1e9):
    return pf.ControlSpec(u0=pf.ControlVector(root_potential=10.0), eta=eta)


def test_monte_carlo_inside_outside():
    case = pipe_case()
    inside = pf.monte_carlo_stability(
        case, singleton_spec(), [demand_parameter(4.0, radius=1.0)],
        samples=100, seed=5)
    assert inside == (1.0, True)
    outside = pf.monte_carlo_stability(
        case, singleton_spec(), [demand_parameter(9.5, radius=0.5)],
        samples=100, seed=5)
    assert outside[0] == 0.0 and not outside[1]


def test_monte_carlo_straddling_fraction():
    case = pipe_case()
    fraction, verdict = pf.monte_carlo_stability(
        case, singleton_spec(), [demand_parameter(8.0, radius=1.0)],
        samples=200, seed=42)
    sigma = math.sqrt(0.25 / 200.0)
    assert abs(fraction - 0.5) <= 2 * sigma
    assert not verdict  # 0.5 < 0.95


def test_monte_carlo_reproducible():
    case = pipe_case()
    a = pf.monte_carlo_stability(case, singleton_spec(),
                                 [demand_parameter(8.0)], samples=50, seed=9)
    b = pf.monte_carlo_stability(case, singleton_spec(),
                                 [demand_parameter(8.0)], samples=50, seed=9)
    assert a == b
    c = pf.monte_carlo_stability(case, singleton_spec(),
                                 [demand_parameter(8.0)], samples=50, seed=10)
    assert c != a  # different seed explores different points


def test_parameter_targets_modify_case():
    case = pipe_case()
    probed = pf.stability.apply_parameter(
        case, pf.potential_bound_parameter("n2", "lo"), 7.0)
    assert probed.network.node_by_id["n2"].potential_lo == 7.0
    probed = pf.stability.apply_parameter(
        case, pf.coefficient_parameter("p12"), 2.5)
    assert probed.network.edge_by_id["p12"].models[0].coefficients[0] == 2.5
    probed = pf.stability.apply_parameter(
        case, pf.intensity_parameter("n2", scale=-1.0), 3.0)
    assert probed.intensities["n2"] == -3.0


def test_edge_capacity_single_pipe():
    edge = pf.EdgeSpec("p", "a", "b", (pf.quadratic_pipe(1.0),))
    cap = pf.edge_capacity(edge, (1.0, 3.0), (1.0, 3.0))
    assert cap == pytest.approx(math.sqrt(8.0), abs=1e-12)


def test_edge_capacity_resistor_family_corner():
    edge = pf.EdgeSpec("r", "a", "b",
                       (pf.linear_resistor(1.0), pf.linear_resistor(4.0)))
    cap = pf.edge_capacity(edge, (2.0, 10.0), (1.0, 5.0))
    assert cap == pytest.approx(9.0)


def test_edge_capacity_degenerate_bounds():
    edge = pf.EdgeSpec("r", "a", "b", (pf.linear_resistor(2.0),))
    cap = pf.edge_capacity(edge, (1.0, 2.0), (3.0, 4.0))
    assert cap == pytest.approx((2.0 - 3.0) / 2.0)
    assert cap <= 0


def test_edge_capacity_machine_only_undefined():
    edge = pf.EdgeSpec("m", "a", "b", (pf.ratio_machine(),),
                       continuous_lo=(1.0,), continuous_hi=(2.0,))
    with pytest.raises(pf.errors.CapacityUndefined):
        pf.edge_capacity(edge, (1.0, 3.0), (1.0, 3.0))


def test_edge_capacity_envelope_grid():
    env = pf.OperatingEnvelope(((-1.0, -1.0), (2.0, -1.0), (2.0, 1.0), (-1.0, 1.0)))
    edge = pf.EdgeSpec("p", "a", "b", (pf.quadratic_pipe(1.0, envelope=env),))
    cap = pf.edge_capacity(edge, (1.0, 3.0), (1.0, 3.0), grid=128)
    assert cap <= 2.0 + 1e-12
    assert cap == pytest.approx(2.0, abs=0.05)


def test_tighten_series_pipes():
    net = series_pipes_network()
    flows = {"eAB": 2.0, "eBC": 2.0}
    intervals = pf.tighten_potential_intervals(net, flows,
                                               {"eAB": 1, "eBC": 1})
    assert intervals["B"][0] == pytest.approx(math.sqrt(4.01), abs=1e-9)
    assert intervals["B"][1] == pytest.approx(math.sqrt(96.0), abs=1e-9)
    assert intervals["A"][0] == pytest.approx(math.sqrt(8.01), abs=1e-9)
    assert intervals["A"][1] == pytest.approx(10.0, abs=1e-9)
    assert intervals["C"][0] == pytest.approx(0.1, abs=1e-9)
    assert intervals["C"][1] == pytest.approx(math.sqrt(92.0), abs=1e-9)
    # Conservative: tightened within raw bounds.
    for n in net.nodes:
        lo, hi = intervals[n.id]
        assert lo >= n.potential_lo - 1e-12
        assert hi <= n.potential_hi + 1e-12


def test_tighten_zero_flow_resistors():
    nodes = (
        pf.NodeSpec("a", 0, 0, 2.0, 8.0),
        pf.NodeSpec("b", 0, 0, 4.0, 10.0),
        pf.NodeSpec("c", 0, 0, 1.0, 6.0),
    )
    edges = (
        pf.EdgeSpec("e1", "a", "b", (pf.linear_resistor(1.0),)),
        pf.EdgeSpec("e2", "b", "c", (pf.linear_resistor(1.0),)),
    )
    net = pf.Network(nodes, edges, "a")
    intervals = pf.tighten_potential_intervals(
        net, {"e1": 0.0, "e2": 0.0}, {"e1": 1, "e2": 1})
    for nid in ("a", "b", "c"):
        assert intervals[nid][0] == pytest.approx(4.0)
        assert intervals[nid][1] == pytest.approx(6.0)


def test_tighten_empty_interval():
    nodes = (pf.NodeSpec("a", 0, 0, 1.0, 3.0), pf.NodeSpec("b", 0, 0, 1.0, 3.0))
    edges = (pf.EdgeSpec("e", "a", "b", (pf.quadratic_pipe(1.0),)),)
    net = pf.Network(nodes, edges, "a")
    with pytest.raises(pf.errors.EmptyInterval):
        pf.tighten_potential_intervals(net, {"e": 5.0}, {"e": 1})  # 25 > 9 - 1


def test_tighten_machine_edge():
    nodes = (pf.NodeSpec("a", 0, 0, 1.0, 10.0), pf.NodeSpec("b", 0, 0, 1.0, 12.0))
    edges = (pf.EdgeSpec("m", "a", "b", (pf.ratio_machine(),),
                         continuous_lo=(1.0,), continuous_hi=(2.0,)),)
    net = pf.Network(nodes, edges, "a")
    intervals = pf.tighten_potential_intervals(
        net, {"m": 1.0}, {"m": 1}, params={"m": (1.5,)})
    assert intervals["b"][0] == pytest.approx(1.5)
    assert intervals["b"][1] == pytest.approx(12.0)
    assert intervals["a"][1] == pytest.approx(8.0)


def test_tighten_iff_property_single_pipe():
    nodes = (pf.NodeSpec("a", 0, 0, 0.1, 10.0), pf.NodeSpec("b", 0, 0, 0.1, 10.0))
    edges = (pf.EdgeSpec("e", "a", "b", (pf.quadratic_pipe(1.0),)),)
    net = pf.Network(nodes, edges, "a")
    intervals = pf.tighten_potential_intervals(net, {"e": 2.0}, {"e": 1})
    lo, hi = intervals["a"]
    for pa in np.linspace(0.1, 10.0, 200):
        rad = pa * pa - 4.0
        solvable = rad > 0 and 0.1 <= math.sqrt(rad) <= 10.0
        inside = lo - 1e-9 <= pa <= hi + 1e-9
        assert solvable == inside

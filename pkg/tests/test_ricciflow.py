"""Coarse edge curvature and the normalized curvature flow."""

import numpy as np
import pytest

from sosm.core import NeighborGraph
from sosm.errors import ParameterError, SizeError, StepSizeError
from sosm.ricciflow import (EdgeCurvatures, all_edge_curvatures, flow_step,
                            ollivier_curvature, run_flow)


def single_edge(weight=1.0):
    return NeighborGraph(n=2, edges={(0, 1): weight})


def cycle_graph(n, weight=1.0):
    edges = {(i, (i + 1) % n): weight for i in range(n)}
    return NeighborGraph(n=n, edges=edges)


def barbell_graph():
    """Two triangles joined by a two-edge path."""
    edges = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (4, 5), (4, 6), (5, 6)]
    return NeighborGraph(n=7, edges={e: 1.0 for e in edges})


class TestOllivierCurvature:
    def test_single_edge_half_idleness_is_one(self):
        # both lazy-walk measures coincide, so the transport distance is 0
        assert ollivier_curvature(single_edge(), (0, 1), idleness=0.5) == 1.0

    def test_single_edge_zero_idleness_is_zero(self):
        # the measures are point masses at the opposite endpoints
        assert ollivier_curvature(single_edge(), (0, 1), idleness=0.0) == 0.0

    def test_four_cycle_edges_all_equal(self):
        graph = cycle_graph(4)
        values = [ollivier_curvature(graph, e, idleness=0.0)
                  for e in graph.edge_list()]
        assert max(values) - min(values) <= 1e-12

    def test_missing_edge_rejected(self):
        with pytest.raises(ParameterError):
            ollivier_curvature(cycle_graph(4), (0, 2), idleness=0.5)

    def test_bad_idleness_rejected(self):
        with pytest.raises(ParameterError):
            ollivier_curvature(single_edge(), (0, 1), idleness=1.0)

    def test_large_union_requires_subsample_flag(self):
        # star of 9 leaves: neighborhood union of a spoke edge has 10 nodes
        star = NeighborGraph(n=10, edges={(0, i): 1.0 for i in range(1, 10)})
        with pytest.raises(SizeError, match="subsample"):
            ollivier_curvature(star, (0, 1), idleness=0.5)
        value = ollivier_curvature(star, (0, 1), idleness=0.5, subsample=True)
        assert np.isfinite(value) and value <= 1.0

    def test_permutation_equivariance(self):
        graph = barbell_graph()
        curv = all_edge_curvatures(graph, idleness=0.3)
        rng = np.random.default_rng(0)
        perm = rng.permutation(7)
        relabeled = {tuple(sorted((int(perm[a]), int(perm[b])))): w
                     for (a, b), w in graph.edges.items()}
        curv_p = all_edge_curvatures(NeighborGraph(n=7, edges=relabeled),
                                     idleness=0.3)
        lookup = curv_p.as_dict()
        for (a, b), kappa in curv.as_dict().items():
            key = tuple(sorted((int(perm[a]), int(perm[b]))))
            assert lookup[key] == pytest.approx(kappa, abs=1e-12)

    def test_kappa_never_exceeds_one(self):
        rng = np.random.default_rng(1)
        for trial in range(5):
            n = 6
            edges = {}
            for i in range(n - 1):
                edges[(i, i + 1)] = float(rng.uniform(0.2, 2.0))
            edges[(0, n - 1)] = float(rng.uniform(0.2, 2.0))
            graph = NeighborGraph(n=n, edges=edges)
            curv = all_edge_curvatures(graph, idleness=float(rng.uniform(0, 0.9)))
            assert np.all(curv.kappas <= 1.0 + 1e-12)


class TestFlowStep:
    def test_zero_curvature_leaves_graph_unchanged(self):
        graph = barbell_graph()
        zero = EdgeCurvatures(edges=tuple(graph.edge_list()),
                              kappas=np.zeros(len(graph.edges)), idleness=0.5)
        stepped = flow_step(graph, zero, eta=0.1)
        assert stepped.edges == graph.edges

    def test_cycle_keeps_equal_weights(self):
        graph = cycle_graph(5)
        curv = all_edge_curvatures(graph, idleness=0.5)
        stepped = flow_step(graph, curv, eta=0.1)
        weights = np.array([stepped.edges[e] for e in stepped.edge_list()])
        assert np.abs(weights - weights[0]).max() <= 1e-15

    def test_uniform_curvature_is_fixed_point(self):
        # renormalization absorbs a uniform multiplicative shrink exactly
        graph = single_edge(weight=2.0)
        curv = EdgeCurvatures(edges=((0, 1),), kappas=np.array([1.0]), idleness=0.5)
        stepped = flow_step(graph, curv, eta=0.1)
        assert stepped.edges[(0, 1)] == 2.0

    def test_total_weight_conserved(self):
        graph = barbell_graph()
        curv = all_edge_curvatures(graph, idleness=0.5)
        stepped = flow_step(graph, curv, eta=0.05)
        assert stepped.total_weight() == pytest.approx(graph.total_weight(), rel=1e-14)

    def test_step_size_error_names_edge(self):
        graph = single_edge()
        curv = EdgeCurvatures(edges=((0, 1),), kappas=np.array([1.0]), idleness=0.5)
        with pytest.raises(StepSizeError, match=r"\(0, 1\)"):
            flow_step(graph, curv, eta=1.0)

    def test_mismatched_edges_rejected(self):
        graph = barbell_graph()
        curv = EdgeCurvatures(edges=((0, 1),), kappas=np.array([0.0]), idleness=0.5)
        with pytest.raises(SizeError):
            flow_step(graph, curv, eta=0.1)


class TestRunFlow:
    def test_cycle_trace_constant_with_zero_variance(self):
        trace = run_flow(cycle_graph(6), idleness=0.5, eta=0.1, iters=10)
        # symmetry fixed point: early stop right after the first snapshot
        assert len(trace.snapshots) == 1
        assert trace.snapshots[0].curvature_variance <= 1e-10
        assert trace.final_graph.edges == cycle_graph(6).edges

    def test_zero_iters_records_initial_snapshot_only(self):
        trace = run_flow(barbell_graph(), idleness=0.5, eta=0.05, iters=0)
        assert len(trace.snapshots) == 1
        assert trace.snapshots[0].iteration == 0

    def test_barbell_variance_non_increasing_after_20_iters(self):
        trace = run_flow(barbell_graph(), idleness=0.5, eta=0.05, iters=20)
        variances = trace.variances()
        assert len(trace.snapshots) == 21
        assert variances[-1] <= variances[0]

    def test_total_weight_drift_over_100_iterations(self):
        trace = run_flow(barbell_graph(), idleness=0.5, eta=0.05, iters=100)
        weights = trace.total_weights()
        drift = np.abs(weights - weights[0]).max() / weights[0]
        assert drift <= 1e-10

    def test_negative_iters_rejected(self):
        with pytest.raises(ParameterError):
            run_flow(barbell_graph(), iters=-1)

    def test_snapshots_record_curvatures(self):
        trace = run_flow(barbell_graph(), idleness=0.5, eta=0.05, iters=2)
        for snapshot in trace.snapshots:
            assert set(snapshot.curvatures) == set(barbell_graph().edges)
            assert snapshot.total_weight > 0

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acdcdyn.network import (AcEdge, DcEdge, HybridGraph, NodeKind,
                             ac_edge_tf, ac_laplacian_tfs,
                             assemble_ac_laplacian, assemble_dc_laplacian,
                             check_assumption1, dc_edge_tf, dc_loss_tf,
                             kron_reduce, kron_reduce_sequential,
                             kron_reduce_symbolic, line_impedance,
                             load_cable_catalog)

W0 = 2 * math.pi * 50.0


def chain_graph(r2=0.0217, uniform_rho=False):
    l1, r1 = 1.02e-6, 5.0e-4
    l2 = 6.6e-6
    if uniform_rho:
        r2 = r1 * l2 / l1
    return HybridGraph(
        ac_nodes=(("sm", NodeKind.SM), ("vsc", NodeKind.VSC),
                  ("load", NodeKind.LOAD_AC)),
        dc_nodes=(("vsc", NodeKind.VSC),),
        ac_edges=(AcEdge("sm", "load", l1, r1),
                  AcEdge("load", "vsc", l2, r2, l_virt_k=0.0023)),
        dc_edges=(), V_ac_star=400.0, omega_star=W0,
        v_dc_star={"vsc": 650.0})


class TestEdges:
    def test_edge_ratio_terms(self):
        e = AcEdge("a", "b", 1e-5, 1e-3, l_virt_k=2e-5, r_virt_k=1e-3)
        assert e.k_nk == pytest.approx(3.0)
        assert e.rho == pytest.approx(2e-3 / 1e-5)

    def test_ac_edge_tf_dc_value(self):
        e = AcEdge("a", "b", 1e-5, 1e-3)
        g = ac_edge_tf(e, 400.0, W0)
        rho = e.rho
        expected = 400.0**2 * W0 / (1e-5 * (rho**2 + W0**2))
        assert g(0.0) == pytest.approx(expected)

    def test_dc_edge_antisymmetry_equal_setpoints(self):
        e = DcEdge("a", "b", 1e-5, 0.1)
        for s in (0.0, 1j, 10 + 5j):
            assert dc_edge_tf(e, 650.0)(s) == pytest.approx(
                dc_edge_tf(e, 650.0)(s))
        assert dc_loss_tf(e, 0.0).num.is_zero()

    def test_validation(self):
        with pytest.raises(ValueError):
            AcEdge("a", "b", 0.0, 0.1)
        with pytest.raises(ValueError):
            DcEdge("a", "b", 1e-5, -0.1)


class TestGraph:
    def test_load_last_normalization(self):
        g = HybridGraph(
            ac_nodes=(("load", NodeKind.LOAD_AC), ("sm", NodeKind.SM)),
            dc_nodes=(), ac_edges=(AcEdge("sm", "load", 1e-5, 1e-3),),
            dc_edges=(), V_ac_star=400.0, omega_star=W0)
        assert g.ac_names == ["sm", "load"]
        assert g.load_names == ["load"]

    def test_vsc_must_be_in_both_sets(self):
        with pytest.raises(ValueError):
            HybridGraph(
                ac_nodes=(("vsc", NodeKind.VSC), ("sm", NodeKind.SM)),
                dc_nodes=(), ac_edges=(AcEdge("sm", "vsc", 1e-5, 1e-3),),
                dc_edges=(), V_ac_star=400.0, omega_star=W0)

    def test_virtual_terms_only_at_vsc(self):
        with pytest.raises(ValueError):
            HybridGraph(
                ac_nodes=(("a", NodeKind.SM), ("b", NodeKind.SM)),
                dc_nodes=(),
                ac_edges=(AcEdge("a", "b", 1e-5, 1e-3, l_virt_n=1e-4),),
                dc_edges=(), V_ac_star=400.0, omega_star=W0)

    def test_disconnected_rejected(self):
        with pytest.raises(ValueError):
            HybridGraph(
                ac_nodes=(("a", NodeKind.SM), ("b", NodeKind.SM)),
                dc_nodes=(), ac_edges=(), dc_edges=(),
                V_ac_star=400.0, omega_star=W0)

    def test_incidence_shape(self):
        g = chain_graph()
        B = g.incidence_ac()
        assert B.shape == (3, 2)
        assert np.allclose(B.sum(axis=0), 0.0)


class TestLaplacian:
    @given(st.floats(min_value=0.1, max_value=1e4))
    @settings(max_examples=30, deadline=None)
    def test_row_sums_vanish(self, w):
        g = chain_graph()
        L, _ = assemble_ac_laplacian(g, 1j * w)
        assert np.max(np.abs(L.sum(axis=1))) < 1e-6 * np.max(np.abs(L))

    def test_rational_row_sums_vanish(self):
        g = chain_graph()
        L = ac_laplacian_tfs(g)
        s = 0.3 + 2.0j
        for row in L:
            total = sum(tf(s) for tf in row)
            scale = max(abs(tf(s)) for tf in row)
            assert abs(total) < 1e-9 * scale

    def test_orientation_invariance(self):
        g1 = chain_graph()
        g2 = HybridGraph(
            ac_nodes=g1.ac_nodes, dc_nodes=g1.dc_nodes,
            ac_edges=tuple(
                AcEdge(e.k, e.n, e.l, e.r, l_virt_n=e.l_virt_k,
                       l_virt_k=e.l_virt_n, r_virt_n=e.r_virt_k,
                       r_virt_k=e.r_virt_n)
                for e in g1.ac_edges),
            dc_edges=(), V_ac_star=400.0, omega_star=W0,
            v_dc_star=dict(g1.v_dc_star))
        s = 1j * 12.0
        L1, _ = assemble_ac_laplacian(g1, s)
        L2, _ = assemble_ac_laplacian(g2, s)
        assert np.allclose(L1, L2)

    def test_dc_laplacian_loss_vector(self):
        g = HybridGraph(
            ac_nodes=(("v1", NodeKind.VSC), ("v2", NodeKind.VSC)),
            dc_nodes=(("v1", NodeKind.VSC), ("v2", NodeKind.VSC)),
            ac_edges=(AcEdge("v1", "v2", 1e-5, 1e-3, l_virt_n=1e-4),),
            dc_edges=(DcEdge("v1", "v2", 2.6e-5, 0.27),),
            V_ac_star=400.0, omega_star=W0,
            v_dc_star={"v1": 742.7, "v2": 740.0})
        L, loss = assemble_dc_laplacian(g, 0.0)
        assert L[0, 0] == pytest.approx(742.7 / 0.27)
        assert loss[0] == pytest.approx(2.7 / 0.27)
        assert loss[1] == pytest.approx(-2.7 / 0.27)


class TestKron:
    @given(st.floats(min_value=0.05, max_value=5e3))
    @settings(max_examples=30, deadline=None)
    def test_joint_vs_sequential(self, w):
        g = chain_graph()
        L, _ = assemble_ac_laplacian(g, 1j * w)
        Gc1, Gl1 = kron_reduce(L, 2)
        Gc2, Gl2 = kron_reduce_sequential(L, 2)
        scale = np.max(np.abs(Gc1))
        assert np.max(np.abs(Gc1 - Gc2)) < 1e-10 * scale
        assert np.max(np.abs(Gl1 - Gl2)) < 1e-10

    def test_symbolic_matches_numeric(self):
        g = chain_graph()
        L = ac_laplacian_tfs(g)
        Gc, Gl = kron_reduce_symbolic(L, 2)
        for w in (0.1, 3.0, 250.0):
            s = 1j * w
            Ln, _ = assemble_ac_laplacian(g, s)
            Gcn, Gln = kron_reduce(Ln, 2)
            for i in range(2):
                for j in range(2):
                    assert Gc[i][j](s) == pytest.approx(Gcn[i, j], rel=1e-7)
                assert Gl[i][0](s) == pytest.approx(Gln[i, 0], rel=1e-7)

    def test_load_columns_sum_to_one_at_dc(self):
        g = chain_graph()
        L, _ = assemble_ac_laplacian(g, 1e-9j)
        _, Gl = kron_reduce(L, 2)
        assert Gl.sum(axis=0)[0] == pytest.approx(1.0, abs=1e-6)

    def test_no_loads_identity(self):
        L = np.array([[1.0, -1.0], [-1.0, 1.0]])
        Gc, Gl = kron_reduce(L, 2)
        assert np.allclose(Gc, L)
        assert Gl.shape == (2, 0)


class TestAssumption1:
    def test_uniform_rho_trivial(self):
        v = check_assumption1(chain_graph(uniform_rho=True))
        assert v.verdict == "holds_trivially"

    def test_single_interior_trivial(self):
        v = check_assumption1(chain_graph())
        assert v.verdict == "holds_trivially"

    def test_adjacent_loads_numeric(self):
        l1, l2, l3 = 1.0e-6, 5.0e-6, 2.0e-6
        g = HybridGraph(
            ac_nodes=(("sm", NodeKind.SM), ("vsc", NodeKind.VSC),
                      ("ld1", NodeKind.LOAD_AC), ("ld2", NodeKind.LOAD_AC)),
            dc_nodes=(("vsc", NodeKind.VSC),),
            ac_edges=(AcEdge("sm", "ld1", l1, 1e-3),
                      AcEdge("ld1", "ld2", l2, 8e-3),
                      AcEdge("ld2", "vsc", l3, 1e-3, l_virt_k=1e-4)),
            dc_edges=(), V_ac_star=400.0, omega_star=W0,
            v_dc_star={"vsc": 650.0})
        v = check_assumption1(g)
        assert v.verdict == "holds"
        assert all(r.real < 0 for r in v.roots)


class TestCatalog:
    def test_default_catalog_entries(self):
        cat = load_cable_catalog()
        assert "NAYY 4x240" in cat

    def test_line_impedance_loop_doubles(self):
        cat = load_cable_catalog()
        r1, l1 = line_impedance(cat, "H07RN-F 2x6", 40.0)
        r2, l2 = line_impedance(cat, "H07RN-F 2x6", 40.0, loop=True)
        assert r2 == pytest.approx(2 * r1)
        assert l2 == pytest.approx(2 * l1)

    def test_unknown_cable(self):
        with pytest.raises(KeyError):
            line_impedance({}, "bogus", 1.0)

"""Closed-loop model assembly for hybrid AC/DC networks under dual-port GFM
control, plus scenario presets and analytic steady-state computation.

The interconnection follows the signal flow: controller frequency -> angle
integrator -> AC network -> conversion energy balance, with generation
resources (governor, PV) feeding the conversion units and VSC DC terminals
coupled through the DC network.  Converters are lossless (AC power equals DC
power); DC network losses are retained where setpoints differ.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .lti import (RationalTF, StateSpace, compose, integrator, tf_to_ss)
from .network import (AcEdge, DcEdge, HybridGraph, NodeKind,
                      ac_laplacian_tfs, check_assumption1, dc_laplacian_tfs,
                      kron_reduce_symbolic, line_impedance, load_cable_catalog)
from .units import (GfmCtrlParams, PerUnitBase, PvParams, SgParams, VscParams,
                    convert_k_pv, gfm_ctrl_tf, governor_droop_tf,
                    sg_damping_tf, sm_tf, vsc_dclink_tf)


class SystemError_(Exception):
    pass


class ImproperController(SystemError_):
    """Realization requested with an ideal (tau_kd = 0) differentiator."""


class NoDroop(SystemError_):
    """No unit provides steady-state droop; the steady state is marginal."""


@dataclass(frozen=True)
class SystemConfig:
    """Full description of one closed-loop system."""

    graph: HybridGraph
    base: PerUnitBase
    sg: dict                   # AC node name -> SgParams
    vsc: dict                  # AC node name -> VscParams
    ctrl: dict                 # VSC node name -> GfmCtrlParams
    pv_droop: dict             # VSC node name -> k_pv in the system base
    pv_params: dict = field(default_factory=dict)   # node -> PvParams
    c_extra: dict = field(default_factory=dict)     # DC node name -> F
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        kinds = dict(self.graph.ac_nodes)
        for n in self.sg:
            if kinds.get(n) is not NodeKind.SM:
                raise ValueError(f"SG parameters assigned to non-SM node {n}")
        for n in self.vsc:
            if kinds.get(n) is not NodeKind.VSC:
                raise ValueError(f"VSC parameters assigned to non-VSC node {n}")
        for n, k in self.graph.ac_nodes:
            if k is NodeKind.SM and n not in self.sg:
                raise ValueError(f"missing SG parameters for {n}")
            if k is NodeKind.VSC and (n not in self.vsc or n not in self.ctrl):
                raise ValueError(f"missing VSC/controller parameters for {n}")
        for n in self.pv_droop:
            if n not in self.vsc:
                raise ValueError(f"PV attached to non-VSC node {n}")

    @property
    def has_infinite_bus(self) -> bool:
        return any(k is NodeKind.INFINITE_BUS for _, k in self.graph.ac_nodes)

    @property
    def i_g(self) -> np.ndarray:
        """Resource-to-conversion incidence (rows: conversion units in node
        order; columns: governor resources then PV resources)."""
        conv = [n for n, k in self.graph.ac_nodes
                if k in (NodeKind.SM, NodeKind.VSC)]
        resources_ = list(self.sg) + list(self.pv_droop)
        M = np.zeros((len(conv), len(resources_)))
        for j, r in enumerate(resources_):
            M[conv.index(r), j] = 1.0
        return M

    @property
    def i_dc(self) -> np.ndarray:
        """AC-conversion-node-to-DC-node incidence."""
        conv = [n for n, k in self.graph.ac_nodes
                if k in (NodeKind.SM, NodeKind.VSC)]
        dc = self.graph.dc_names
        M = np.zeros((len(conv), len(dc)))
        for i, n in enumerate(conv):
            if n in dc:
                M[i, dc.index(n)] = 1.0
        return M


@dataclass(frozen=True)
class ClosedLoopModel:
    ss: StateSpace
    config: SystemConfig
    network_verdict: str = ""


@dataclass(frozen=True)
class SteadyState:
    domega: float              # p.u.
    dv_dc: dict                # VSC node -> p.u.
    dp_tg: float               # p.u.
    dp_pv: float               # p.u.
    dp_ac: dict                # conversion node -> p.u.
    kappa_tg: float            # effective governor droop (inverse stiffness)
    kappa_pv: float


# --------------------------------------------------------------------------
# realization helpers
# --------------------------------------------------------------------------

def _mimo_from_tf_matrix(tfm, input_names, output_names,
                         diag_extra=None) -> StateSpace:
    """Realize a matrix of rational transfer functions entrywise.

    `diag_extra` optionally adds a transfer function on the diagonal (used for
    the DC loss injection, which acts on each node's own voltage).
    """
    p, m = len(tfm), len(tfm[0])
    parts = []
    for i in range(p):
        for j in range(m):
            tf = tfm[i][j]
            if diag_extra is not None and i == j and i < len(diag_extra):
                tf = (tf + diag_extra[i]).simplify()
            if tf.num.is_zero():
                continue
            parts.append((i, j, tf_to_ss(tf)))
    n = sum(ss.n_states for _, _, ss in parts)
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    C = np.zeros((p, n))
    D = np.zeros((p, m))
    ix = 0
    for i, j, ss in parts:
        k = ss.n_states
        A[ix:ix + k, ix:ix + k] = ss.A
        B[ix:ix + k, j] = ss.B[:, 0]
        C[i, ix:ix + k] = ss.C[0]
        D[i, j] += ss.D[0, 0]
        ix += k
    return StateSpace(A, B, C, D, tuple(input_names), tuple(output_names))


# --------------------------------------------------------------------------
# closed-loop assembly
# --------------------------------------------------------------------------

def build(config: SystemConfig, check_network: bool = True) -> ClosedLoopModel:
    """Assemble the interconnected closed-loop state-space model.

    Inputs: p_load_<node> per load node (p.u., consumption-positive),
    omega_pg when an infinite bus is present, n_<vsc> measurement noise.
    Outputs: omega/v_dc/p_ac/p_dc per unit plus governor and PV powers.
    """
    g = config.graph
    base = config.base
    for name, ctrl in config.ctrl.items():
        if ctrl.tau_kd == 0.0:
            raise ImproperController(
                f"controller at {name} has tau_kd = 0 (not realizable)")
    verdict = ""
    if check_network:
        res = check_assumption1(g)
        verdict = res.verdict
        if verdict == "fails":
            warnings.warn("load-block inverse is unstable; the assembled "
                          "model inherits unstable network modes")

    conv = g.conv_names
    loads = g.load_names
    blocks: dict[str, StateSpace] = {}
    conns: list[tuple[str, str, float]] = []
    ext_in: list[str] = []
    ext_out: list[tuple[str, str]] = []   # (public name, internal channel)

    # reduced AC network in per-unit power
    L = ac_laplacian_tfs(g)
    G_conv, G_load = kron_reduce_symbolic(L, len(conv))
    # angle inputs: W per rad -> p.u. per rad; load inputs are already
    # power-to-power and stay dimensionless
    scale = 1.0 / base.S_base
    net_tfm = [[(scale * G_conv[i][j]).simplify() for j in range(len(conv))]
               + [G_load[i][c].simplify() for c in range(len(loads))]
               for i in range(len(conv))]
    net_inputs = [f"th_{n}" for n in conv] + [f"pl_{n}" for n in loads]
    net_outputs = [f"p_{n}" for n in conv]
    blocks["acnet"] = _mimo_from_tf_matrix(net_tfm, net_inputs, net_outputs)

    # DC network in per-unit power over per-unit node voltages
    has_dc = len(g.dc_edges) > 0
    if has_dc:
        Ldc, loss = dc_laplacian_tfs(g)
        k_v = base.V_base_dc / base.S_base
        dc_tfm = [[(k_v * tf).simplify() for tf in row] for row in Ldc]
        dc_loss = [(k_v * tf).simplify() for tf in loss]
        dc_names = g.dc_names
        blocks["dcnet"] = _mimo_from_tf_matrix(
            dc_tfm, [f"v_{n}" for n in dc_names],
            [f"p_{n}" for n in dc_names], diag_extra=dc_loss)

    kinds = dict(g.ac_nodes)
    for n in conv:
        kind = kinds[n]
        if kind is NodeKind.SM:
            p = config.sg[n]
            swing = sm_tf(p, per_unit=True)          # machine base S_n
            # rescale the power input from the system base to S_n
            swing = (base.S_base / p.S_n) * swing
            blocks[f"sm_{n}"] = tf_to_ss(swing, "p", "omega")
            blocks[f"tg_{n}"] = tf_to_ss(
                governor_droop_tf(p, base.S_base), "omega", "p")
            blocks[f"dmp_{n}"] = tf_to_ss(
                sg_damping_tf(p, base.S_base), "omega", "p")
            blocks[f"th_{n}"] = integrator(base.omega_base, "omega", "theta")
            conns += [
                (f"sm_{n}.p", f"tg_{n}.p", 1.0),
                (f"sm_{n}.p", f"dmp_{n}.p", 1.0),
                (f"dmp_{n}.omega", f"sm_{n}.omega", 1.0),
                (f"sm_{n}.p", f"acnet.p_{n}", -1.0),
                (f"tg_{n}.omega", f"sm_{n}.omega", 1.0),
                (f"th_{n}.omega", f"sm_{n}.omega", 1.0),
                (f"acnet.th_{n}", f"th_{n}.theta", 1.0),
            ]
            ext_out += [(f"omega_{n}", f"sm_{n}.omega"),
                        (f"p_ac_{n}", f"acnet.p_{n}"),
                        (f"p_tg_{n}", f"tg_{n}.p")]
        elif kind is NodeKind.VSC:
            p = config.vsc[n]
            cap = vsc_dclink_tf(p, base=base,
                                c_extra=config.c_extra.get(n, 0.0))
            blocks[f"cap_{n}"] = tf_to_ss(cap, "p", "v")
            blocks[f"ctr_{n}"] = tf_to_ss(gfm_ctrl_tf(config.ctrl[n]),
                                          "v", "omega")
            blocks[f"th_{n}"] = integrator(base.omega_base, "omega", "theta")
            conns += [
                (f"cap_{n}.p", f"acnet.p_{n}", -1.0),
                (f"ctr_{n}.v", f"cap_{n}.v", 1.0),
                (f"ctr_{n}.v", f"n_{n}", 1.0),
                (f"th_{n}.omega", f"ctr_{n}.omega", 1.0),
                (f"acnet.th_{n}", f"th_{n}.theta", 1.0),
            ]
            ext_in.append(f"n_{n}")
            if n in config.pv_droop:
                blocks[f"pv_{n}"] = StateSpace.static(
                    [[-config.pv_droop[n]]], ("v",), ("p",))
                conns += [(f"pv_{n}.v", f"cap_{n}.v", 1.0),
                          (f"cap_{n}.p", f"pv_{n}.p", 1.0)]
                ext_out.append((f"p_pv_{n}", f"pv_{n}.p"))
            if has_dc and n in g.dc_names:
                conns += [(f"dcnet.v_{n}", f"cap_{n}.v", 1.0),
                          (f"cap_{n}.p", f"dcnet.p_{n}", -1.0)]
                ext_out.append((f"p_dc_{n}", f"dcnet.p_{n}"))
            ext_out += [(f"omega_{n}", f"ctr_{n}.omega"),
                        (f"v_dc_{n}", f"cap_{n}.v"),
                        (f"p_ac_{n}", f"acnet.p_{n}")]
        elif kind is NodeKind.INFINITE_BUS:
            blocks[f"th_{n}"] = integrator(base.omega_base, "omega", "theta")
            conns += [(f"th_{n}.omega", "omega_pg", 1.0),
                      (f"acnet.th_{n}", f"th_{n}.theta", 1.0)]

    for n in loads:
        conns.append((f"acnet.pl_{n}", f"p_load_{n}", 1.0))

    ext_inputs = [f"p_load_{n}" for n in loads]
    if config.has_infinite_bus:
        ext_inputs.append("omega_pg")
    ext_inputs += ext_in

    ss = compose(blocks, conns, ext_inputs, [ch for _, ch in ext_out])
    ss = StateSpace(ss.A, ss.B, ss.C, ss.D, ss.input_names,
                    tuple(name for name, _ in ext_out))
    return ClosedLoopModel(ss, config, verdict)


# --------------------------------------------------------------------------
# analytic steady state
# --------------------------------------------------------------------------

def steady_state(config: SystemConfig, dp_load: float) -> SteadyState:
    """Analytic steady state after a load step of `dp_load` (p.u. in the
    system base, consumption-positive), assuming lossless conversion."""
    kappa_tg_inv = sum(p.k_tg * p.P_max / config.base.S_base
                       for p in config.sg.values())
    kappa_pv_inv = sum(config.pv_droop[n] / config.ctrl[n].k_p
                       for n in config.pv_droop)
    kappa_tg = math.inf if kappa_tg_inv == 0 else 1.0 / kappa_tg_inv
    kappa_pv = math.inf if kappa_pv_inv == 0 else 1.0 / kappa_pv_inv
    if config.has_infinite_bus:
        return SteadyState(0.0, {n: 0.0 for n in config.vsc}, 0.0, 0.0,
                           {n: 0.0 for n in config.graph.conv_names},
                           kappa_tg, kappa_pv)
    stiffness = kappa_tg_inv + kappa_pv_inv
    if stiffness == 0:
        raise NoDroop("no unit provides steady-state droop")
    domega = -dp_load / stiffness
    dv = {n: domega / config.ctrl[n].k_p for n in config.vsc}
    dp_tg = kappa_tg_inv / stiffness * dp_load
    dp_pv = kappa_pv_inv / stiffness * dp_load
    dp_ac = {}
    for n, k in config.graph.ac_nodes:
        if k is NodeKind.SM:
            dp_ac[n] = dp_tg
        elif k is NodeKind.VSC:
            share = config.pv_droop.get(n, 0.0) / config.ctrl[n].k_p
            dp_ac[n] = (share / stiffness) * dp_load
    return SteadyState(domega, dv, dp_tg, dp_pv, dp_ac, kappa_tg, kappa_pv)


def nominal_dc_dispatch(config: SystemConfig) -> dict:
    """Nominal operating-point power flow per DC edge and the resulting AC
    injection of each VSC (p.u.): P_ac = -P_dc,export under lossless
    conversion.  Requires resistive DC links."""
    flows = {}
    p_ac = {n: 0.0 for n in config.vsc}
    for e in config.graph.dc_edges:
        if e.r_dc == 0:
            raise ValueError("nominal dispatch undefined for a lossless link")
        vn = config.graph.v_dc_star[e.n]
        vk = config.graph.v_dc_star[e.k]
        p_nk = vn * (vn - vk) / e.r_dc / config.base.S_base
        flows[(e.n, e.k)] = p_nk
        if e.n in p_ac:
            p_ac[e.n] -= p_nk
        if e.k in p_ac:
            p_ac[e.k] -= vk * (vk - vn) / e.r_dc / config.base.S_base
    return {"edge_flows": flows, "p_ac": p_ac}


# --------------------------------------------------------------------------
# scenario presets
# --------------------------------------------------------------------------

def _load_preset(name: str) -> dict:
    text = resources.files("acdcdyn").joinpath(
        f"data/presets/{name}.json").read_text()
    return json.loads(text)


def _deep_set(data: dict, dotted: str, value):
    keys = [int(k) if k.lstrip("-").isdigit() else k
            for k in dotted.split(".")]
    d = data
    for k in keys[:-1]:
        d = d[k]
    d[keys[-1]] = value


def config_from_dict(data: dict) -> SystemConfig:
    """Build a SystemConfig from the JSON-facing dictionary schema used by
    preset files and the command line."""
    b = data["base"]
    base = PerUnitBase(b["s_base_va"], b["v_base_ac_v"], b["v_base_dc_v"],
                       2.0 * math.pi * b["f_base_hz"])
    catalog = load_cable_catalog(data.get("cable_catalog"))

    sg_params, vsc_params, ctrl, pv_droop, pv_params, c_extra = \
        {}, {}, {}, {}, {}, {}
    if data.get("sg"):
        s = data["sg"]
        sg_params[s["node"]] = SgParams(
            s["s_n_va"], s["p_max_w"], s["v_n_v"], s["n_r_hz"], s["h_s"],
            s["k_tg"], s["k_omega"], s["t1_s"], s["t2_s"])
    v_dc_star = {}
    for v in data.get("vscs", []):
        node = v["node"]
        vsc_params[node] = VscParams(
            v["s_rated_va"], v["v_rated_v"], v["c_dc_f"], v["v_dc_star_v"],
            v["l_virtual_h"], v.get("r_virtual_ohm", 0.0))
        c = v["control"]
        ctrl[node] = GfmCtrlParams(c["k_p"], c["k_d"], c["tau_kd_s"],
                                   omega_star=base.omega_base)
        c_extra[node] = v.get("c_extra_f", 0.0)
        v_dc_star[node] = v["v_dc_star_v"]
        if v.get("pv"):
            pv = v["pv"]
            pv_params[node] = PvParams(pv["v_mpp_v"], pv["i_mpp_a"],
                                       pv["v_oc_v"], pv["i_sc_a"],
                                       pv["v_op_v"])
            pv_base = PerUnitBase(pv["s_base_va"], base.V_base_ac,
                                  pv["v_base_dc_v"], base.omega_base)
            pv_droop[node] = convert_k_pv(pv["k_pv_pu"], pv_base, base)

    kind_map = {"sm": NodeKind.SM, "vsc": NodeKind.VSC,
                "load_ac": NodeKind.LOAD_AC,
                "infinite_bus": NodeKind.INFINITE_BUS,
                "dc_interior": NodeKind.DC_INTERIOR}
    ac_nodes = [(n, kind_map[k]) for n, k in data["ac_nodes"]]

    ac_edges = []
    for e in data["ac_edges"]:
        r = l = 0.0
        for seg in e["segments"]:
            rr, ll = line_impedance(catalog, seg["cable"], seg["length_m"],
                                    f_hz=b["f_base_hz"])
            r += rr
            l += ll
        l += e.get("l_extra_h", 0.0)
        kw = {}
        virt = e.get("virtual_at")
        if virt is not None:
            vp = vsc_params[virt]
            side = "n" if virt == e["n"] else "k"
            kw[f"l_virt_{side}"] = vp.l_virtual
            kw[f"r_virt_{side}"] = vp.r_virtual
        ac_edges.append(AcEdge(e["n"], e["k"], l, r, **kw))

    dc_edges = []
    for e in data.get("dc_edges", []):
        if "cable" in e:
            r, l = line_impedance(catalog, e["cable"], e["length_m"],
                                  f_hz=b["f_base_hz"],
                                  loop=e.get("loop", True))
        else:
            r, l = e["r_ohm"], e["l_h"]
        if "r_ohm" in e:
            r = e["r_ohm"]
        if "l_h" in e:
            l = e["l_h"]
        dc_edges.append(DcEdge(e["n"], e["k"], l, r))

    dc_nodes = [(n, NodeKind.VSC) for n in vsc_params]
    graph = HybridGraph(tuple(ac_nodes), tuple(dc_nodes), tuple(ac_edges),
                        tuple(dc_edges), b["v_base_ac_v"], base.omega_base,
                        v_dc_star)
    meta = {k: data[k] for k in ("scenario", "ratio_bounds", "nominal")
            if k in data}
    return SystemConfig(graph, base, sg_params, vsc_params, ctrl, pv_droop,
                        pv_params, c_extra, meta)


def _scenario(name: str, overrides: dict | None = None,
              **simple) -> SystemConfig:
    data = _load_preset(name)
    for key, value in simple.items():
        if value is None:
            continue
        _apply_simple_override(data, key, value)
    for dotted, value in (overrides or {}).items():
        _deep_set(data, dotted, value)
    return config_from_dict(data)


def _apply_simple_override(data: dict, key: str, value):
    """Ergonomic overrides: k_p/k_d/tau_kd (all VSCs), k_p_1/k_d_1/tau_kd_1
    (i-th VSC), v_dc_star_pu (tuple over VSCs), r_dc/l_dc (all DC edges)."""
    vscs = data.get("vscs", [])
    gains = {"k_p": "k_p", "k_d": "k_d", "tau_kd": "tau_kd_s"}
    if key in gains:
        for v in vscs:
            v["control"][gains[key]] = value
        return
    for g, js in gains.items():
        if key.startswith(g + "_"):
            i = int(key[len(g) + 1:]) - 1
            vscs[i]["control"][js] = value
            return
    if key == "v_dc_star_pu":
        vb = data["base"]["v_base_dc_v"]
        for v, pu in zip(vscs, value):
            v["v_dc_star_v"] = pu * vb
        return
    if key in ("r_dc", "l_dc"):
        for e in data.get("dc_edges", []):
            e["r_ohm" if key == "r_dc" else "l_h"] = value
        return
    raise KeyError(f"unknown override {key!r}")


def scenario_islanded_pv(**kwargs) -> SystemConfig:
    """Islanded LVAC area: SG + resistive load + PV-fed VSC."""
    return _scenario("islanded_pv", **kwargs)


def scenario_lvdc_async(**kwargs) -> SystemConfig:
    """SG + load area coupled to a stiff utility grid solely via an LVDC
    link between two dual-port GFM VSCs."""
    return _scenario("lvdc_async", **kwargs)


def scenario_parallel_ac_dc(**kwargs) -> SystemConfig:
    """As the LVDC configuration plus a parallel LVAC tie, making the two AC
    areas synchronous; DC-link flow is dispatched by voltage setpoints."""
    return _scenario("parallel_ac_dc", **kwargs)

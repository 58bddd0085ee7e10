"""Hybrid AC/DC network graphs, linearized edge transfer functions,
Laplacian assembly, and generalized Kron reduction of load nodes.

Angles are in radians, node voltages in volts; edge transfer functions map
angle differences (AC) or voltage differences (DC) to power in watts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Sequence

import numpy as np

from .lti import Polynomial, RationalTF


class NetworkError(Exception):
    pass


class EdgePole(NetworkError):
    """Evaluation frequency coincides with an edge transfer-function pole."""


class SingularLL(NetworkError):
    """Load-block L_L is numerically singular at the requested point."""


class DegenerateDeterminant(NetworkError):
    """det L_L is identically zero (degenerate load component)."""


class NodeKind(Enum):
    SM = "sm"
    VSC = "vsc"
    LOAD_AC = "load_ac"
    INFINITE_BUS = "infinite_bus"
    DC_INTERIOR = "dc_interior"


_CONV_KINDS = (NodeKind.SM, NodeKind.VSC, NodeKind.INFINITE_BUS)


@dataclass(frozen=True)
class AcEdge:
    """Series RL line between AC nodes n and k, with the quasi-steady-state
    virtual impedance of VSC endpoints lumped in."""

    n: str
    k: str
    l: float                 # H
    r: float                 # Ohm
    l_virt_n: float = 0.0    # H
    l_virt_k: float = 0.0
    r_virt_n: float = 0.0    # Ohm
    r_virt_k: float = 0.0

    def __post_init__(self):
        if self.l <= 0:
            raise ValueError("line inductance must be positive")
        if min(self.r, self.l_virt_n, self.l_virt_k,
               self.r_virt_n, self.r_virt_k) < 0:
            raise ValueError("resistances and virtual terms must be >= 0")

    @property
    def k_nk(self) -> float:
        return (self.l_virt_n + self.l_virt_k + self.l) / self.l

    @property
    def rho(self) -> float:
        return (self.r_virt_n + self.r_virt_k + self.r) / self.l


@dataclass(frozen=True)
class DcEdge:
    """Series RL DC link between DC nodes n and k."""

    n: str
    k: str
    l_dc: float              # H
    r_dc: float              # Ohm

    def __post_init__(self):
        if self.l_dc <= 0:
            raise ValueError("DC link inductance must be positive")
        if self.r_dc < 0:
            raise ValueError("DC link resistance must be >= 0")


def ac_edge_tf(e: AcEdge, V_ac_star: float, omega_star: float) -> RationalTF:
    """Angle-difference-to-power transfer function
    k V*^2 w* / (l (s^2 + 2 rho s + rho^2 + (k w*)^2))."""
    gain = e.k_nk * V_ac_star**2 * omega_star / e.l
    den = Polynomial([e.rho**2 + (e.k_nk * omega_star) ** 2, 2.0 * e.rho, 1.0])
    return RationalTF(Polynomial([gain]), den)


def dc_edge_tf(e: DcEdge, v_dc_star_n: float) -> RationalTF:
    """Voltage-difference-to-power flow v*_n / (l s + r) out of node n."""
    return RationalTF(Polynomial([v_dc_star_n]),
                      Polynomial([e.r_dc, e.l_dc]))


def dc_loss_tf(e: DcEdge, dv_star: float) -> RationalTF:
    """Node-voltage-to-loss power (v*_n - v*_k) / (l s + r); identically zero
    for equal setpoints."""
    return RationalTF(Polynomial([dv_star]), Polynomial([e.r_dc, e.l_dc]))


@dataclass(frozen=True)
class HybridGraph:
    """Typed hybrid AC/DC network with its linearization operating point.

    AC node order is normalized so load nodes come last; VSC nodes appear in
    both node sets under the same name.
    """

    ac_nodes: tuple[tuple[str, NodeKind], ...]
    dc_nodes: tuple[tuple[str, NodeKind], ...]
    ac_edges: tuple[AcEdge, ...]
    dc_edges: tuple[DcEdge, ...]
    V_ac_star: float
    omega_star: float
    v_dc_star: dict = field(default_factory=dict)   # node name -> V

    def __post_init__(self):
        ac = [(str(n), k) for n, k in self.ac_nodes]
        dc = [(str(n), k) for n, k in self.dc_nodes]
        conv = [(n, k) for n, k in ac if k is not NodeKind.LOAD_AC]
        load = [(n, k) for n, k in ac if k is NodeKind.LOAD_AC]
        for n, k in conv:
            if k not in _CONV_KINDS:
                raise ValueError(f"invalid AC node kind for {n}: {k}")
        for n, k in dc:
            if k not in (NodeKind.VSC, NodeKind.DC_INTERIOR):
                raise ValueError(f"invalid DC node kind for {n}: {k}")
        object.__setattr__(self, "ac_nodes", tuple(conv + load))
        object.__setattr__(self, "dc_nodes", tuple(dc))
        object.__setattr__(self, "ac_edges", tuple(self.ac_edges))
        object.__setattr__(self, "dc_edges", tuple(self.dc_edges))
        if self.V_ac_star <= 0 or self.omega_star <= 0:
            raise ValueError("operating point must be positive")
        kinds = dict(self.ac_nodes)
        names = set(kinds)
        dc_names = {n for n, _ in self.dc_nodes}
        vsc_ac = {n for n, k in self.ac_nodes if k is NodeKind.VSC}
        vsc_dc = {n for n, k in self.dc_nodes if k is NodeKind.VSC}
        if vsc_ac != vsc_dc:
            raise ValueError("VSC nodes must appear in both node sets")
        for e in self.ac_edges:
            if e.n not in names or e.k not in names:
                raise ValueError(f"AC edge references unknown node {e.n}/{e.k}")
            for end, lv, rv in ((e.n, e.l_virt_n, e.r_virt_n),
                                (e.k, e.l_virt_k, e.r_virt_k)):
                if kinds[end] is not NodeKind.VSC and (lv != 0 or rv != 0):
                    raise ValueError(
                        f"virtual impedance on non-VSC endpoint {end}")
        for e in self.dc_edges:
            if e.n not in dc_names or e.k not in dc_names:
                raise ValueError(f"DC edge references unknown node {e.n}/{e.k}")
        for n in dc_names:
            if n not in self.v_dc_star:
                raise ValueError(f"missing DC setpoint for node {n}")
        if not self._connected():
            raise ValueError("hybrid graph must be connected")

    def _connected(self) -> bool:
        nodes = {n for n, _ in self.ac_nodes} | {n for n, _ in self.dc_nodes}
        if not nodes:
            return False
        adj = {n: set() for n in nodes}
        for e in list(self.ac_edges) + list(self.dc_edges):
            adj[e.n].add(e.k)
            adj[e.k].add(e.n)
        seen = set()
        stack = [next(iter(nodes))]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(adj[n] - seen)
        return seen == nodes

    # -- node bookkeeping ---------------------------------------------------

    @property
    def ac_names(self) -> list[str]:
        return [n for n, _ in self.ac_nodes]

    @property
    def conv_names(self) -> list[str]:
        return [n for n, k in self.ac_nodes if k is not NodeKind.LOAD_AC]

    @property
    def load_names(self) -> list[str]:
        return [n for n, k in self.ac_nodes if k is NodeKind.LOAD_AC]

    @property
    def dc_names(self) -> list[str]:
        return [n for n, _ in self.dc_nodes]

    def incidence_ac(self) -> np.ndarray:
        idx = {n: i for i, n in enumerate(self.ac_names)}
        B = np.zeros((len(idx), len(self.ac_edges)))
        for j, e in enumerate(self.ac_edges):
            B[idx[e.n], j] = 1.0
            B[idx[e.k], j] = -1.0
        return B

    def incidence_dc(self) -> np.ndarray:
        idx = {n: i for i, n in enumerate(self.dc_names)}
        B = np.zeros((len(idx), len(self.dc_edges)))
        for j, e in enumerate(self.dc_edges):
            B[idx[e.n], j] = 1.0
            B[idx[e.k], j] = -1.0
        return B

    def ac_components(self) -> list[set[str]]:
        """Connected components of the AC subgraph."""
        adj = {n: set() for n in self.ac_names}
        for e in self.ac_edges:
            adj[e.n].add(e.k)
            adj[e.k].add(e.n)
        comps, seen = [], set()
        for start in self.ac_names:
            if start in seen:
                continue
            comp, stack = set(), [start]
            while stack:
                n = stack.pop()
                if n in comp:
                    continue
                comp.add(n)
                stack.extend(adj[n] - comp)
            seen |= comp
            comps.append(comp)
        return comps


# --------------------------------------------------------------------------
# Laplacian assembly
# --------------------------------------------------------------------------

def ac_laplacian_tfs(g: HybridGraph) -> list[list[RationalTF]]:
    """Rational weighted AC Laplacian in the load-last node order."""
    names = g.ac_names
    idx = {n: i for i, n in enumerate(names)}
    zero = RationalTF(Polynomial([0.0]), Polynomial([1.0]))
    L = [[zero for _ in names] for _ in names]
    for e in g.ac_edges:
        w = ac_edge_tf(e, g.V_ac_star, g.omega_star)
        i, j = idx[e.n], idx[e.k]
        L[i][i] = L[i][i] + w
        L[j][j] = L[j][j] + w
        L[i][j] = L[i][j] - w
        L[j][i] = L[j][i] - w
    return L


def assemble_ac_laplacian(g: HybridGraph, s: complex):
    """Evaluate the weighted AC Laplacian at s and return it together with the
    conversion/load block partition {L_conv, L_conv_load, L_load_conv, L_load}."""
    names = g.ac_names
    idx = {n: i for i, n in enumerate(names)}
    L = np.zeros((len(names), len(names)), dtype=complex)
    for e in g.ac_edges:
        tf = ac_edge_tf(e, g.V_ac_star, g.omega_star)
        if abs(tf.den(s)) < 1e-12 * (1.0 + abs(s)) ** 2:
            raise EdgePole(f"s = {s} is a pole of edge ({e.n},{e.k})")
        w = tf(s)
        i, j = idx[e.n], idx[e.k]
        L[i, i] += w
        L[j, j] += w
        L[i, j] -= w
        L[j, i] -= w
    nc = len(g.conv_names)
    blocks = {"L_conv": L[:nc, :nc], "L_conv_load": L[:nc, nc:],
              "L_load_conv": L[nc:, :nc], "L_load": L[nc:, nc:]}
    return L, blocks


def assemble_dc_laplacian(g: HybridGraph, s: complex):
    """Evaluate the weighted DC Laplacian (asymmetric for unequal setpoints)
    at s, plus the diagonal loss-injection vector."""
    names = g.dc_names
    idx = {n: i for i, n in enumerate(names)}
    L = np.zeros((len(names), len(names)), dtype=complex)
    loss = np.zeros(len(names), dtype=complex)
    for e in g.dc_edges:
        den = e.r_dc + e.l_dc * s
        if abs(den) < 1e-12 * (1.0 + abs(s)):
            raise EdgePole(f"s = {s} is a pole of DC edge ({e.n},{e.k})")
        vn = g.v_dc_star[e.n]
        vk = g.v_dc_star[e.k]
        i, j = idx[e.n], idx[e.k]
        L[i, i] += vn / den
        L[i, j] -= vn / den
        L[j, j] += vk / den
        L[j, i] -= vk / den
        loss[i] += (vn - vk) / den
        loss[j] += (vk - vn) / den
    return L, loss


def dc_laplacian_tfs(g: HybridGraph):
    """Rational DC Laplacian and diagonal loss injection transfer functions."""
    names = g.dc_names
    idx = {n: i for i, n in enumerate(names)}
    zero = RationalTF(Polynomial([0.0]), Polynomial([1.0]))
    L = [[zero for _ in names] for _ in names]
    loss = [zero for _ in names]
    for e in g.dc_edges:
        den = Polynomial([e.r_dc, e.l_dc])
        wn = RationalTF(Polynomial([g.v_dc_star[e.n]]), den)
        wk = RationalTF(Polynomial([g.v_dc_star[e.k]]), den)
        dv = RationalTF(Polynomial([g.v_dc_star[e.n] - g.v_dc_star[e.k]]), den)
        i, j = idx[e.n], idx[e.k]
        L[i][i] = L[i][i] + wn
        L[i][j] = L[i][j] - wn
        L[j][j] = L[j][j] + wk
        L[j][i] = L[j][i] - wk
        loss[i] = loss[i] + dv
        loss[j] = loss[j] - dv
    return L, loss


# --------------------------------------------------------------------------
# Kron reduction
# --------------------------------------------------------------------------

def kron_reduce(L: np.ndarray, n_conv: int, s: complex = None):
    """Joint Schur-complement elimination of the trailing load block of a
    Laplacian evaluated at one point.

    Returns (G_conv, G_load) with G_conv = L11 - L12 L22^-1 L21 and the
    consumption-positive load map G_load = -L12 L22^-1 (columns sum to one at
    s = 0 for a connected network).
    """
    L = np.asarray(L)
    n = L.shape[0]
    if n_conv > n:
        raise ValueError("n_conv exceeds matrix size")
    if n_conv == n:
        return L.copy(), np.zeros((n, 0), dtype=L.dtype)
    L11 = L[:n_conv, :n_conv]
    L12 = L[:n_conv, n_conv:]
    L21 = L[n_conv:, :n_conv]
    L22 = L[n_conv:, n_conv:]
    if np.linalg.cond(L22) > 1e12:
        raise SingularLL(f"load block singular at s = {s}")
    X = np.linalg.solve(L22.T, L12.T).T      # L12 L22^-1
    return L11 - X @ L21, -X


def kron_reduce_sequential(L: np.ndarray, n_conv: int):
    """One-at-a-time scalar-pivot elimination of load nodes; agrees with the
    joint Schur complement up to roundoff."""
    M = np.array(L, dtype=complex)
    n = M.shape[0]
    W = np.zeros((n, n - n_conv), dtype=complex)
    for c in range(n - n_conv):
        W[n_conv + c, c] = -1.0
    for e in range(n - 1, n_conv - 1, -1):
        piv = M[e, e]
        if abs(piv) < 1e-300:
            raise SingularLL("zero pivot in sequential elimination")
        rows = list(range(e))
        for i in rows:
            f = M[i, e] / piv
            M[i, :e] -= f * M[e, :e]
            W[i] -= f * W[e]
        M = M[:e, :e]
        W = W[:e]
    return M, -W


def kron_reduce_symbolic(L: Sequence[Sequence[RationalTF]], n_conv: int,
                         tol: float = 1e-7):
    """Sequential scalar-pivot elimination with rational arithmetic; common
    factors are cancelled by root matching after each update.

    Returns (G_conv, G_load) as matrices of RationalTF, with the same
    consumption-positive load-map convention as kron_reduce.
    """
    M = [list(row) for row in L]
    n = len(M)
    zero = RationalTF(Polynomial([0.0]), Polynomial([1.0]))
    W = [[zero for _ in range(n - n_conv)] for _ in range(n)]
    for c in range(n - n_conv):
        W[n_conv + c][c] = RationalTF.constant(-1.0)
    for e in range(n - 1, n_conv - 1, -1):
        piv = M[e][e]
        if piv.num.is_zero():
            raise SingularLL("zero pivot in symbolic elimination")
        for i in range(e):
            if M[i][e].num.is_zero():
                continue
            f = (M[i][e] / piv).simplify(tol)
            for j in range(e):
                if not M[e][j].num.is_zero():
                    M[i][j] = (M[i][j] - f * M[e][j]).simplify(tol)
            for c in range(n - n_conv):
                if not W[e][c].num.is_zero():
                    W[i][c] = (W[i][c] - f * W[e][c]).simplify(tol)
        M = [row[:e] for row in M[:e]]
        W = W[:e]
    G_load = [[(-1.0 * w).simplify(tol) for w in row] for row in W]
    return M, G_load


# --------------------------------------------------------------------------
# Assumption-1 style stability of the load block
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LoadBlockVerdict:
    verdict: str                  # "holds" | "fails" | "holds_trivially"
    roots: tuple[complex, ...]
    reason: str = ""


def _det_symbolic(M: list[list[RationalTF]], tol: float = 1e-9) -> RationalTF:
    n = len(M)
    if n == 1:
        return M[0][0]
    det = RationalTF(Polynomial([0.0]), Polynomial([1.0]))
    for j in range(n):
        if M[0][j].num.is_zero():
            continue
        minor = [[M[i][k] for k in range(n) if k != j] for i in range(1, n)]
        term = M[0][j] * _det_symbolic(minor, tol)
        det = ((-1.0) ** j * term + det).simplify(tol)
    return det

def _det_roots_eig(M: list[list[RationalTF]]) -> np.ndarray:
    """Roots of det M(s) for a rational matrix via companion linearization of
    the denominator-cleared polynomial matrix; spurious cleared-denominator
    roots are filtered afterwards."""
    n = len(M)
    dens = []
    for row in M:
        for tf in row:
            key = tuple(tf.den.coeffs)
            if key not in [tuple(d.coeffs) for d in dens] and tf.den.degree > 0:
                dens.append(tf.den)
    clear = Polynomial([1.0])
    for d in dens:
        clear = clear * d
    # polynomial matrix entries N_ij = M_ij * clear (exact by construction)
    deg = 0
    P = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            tf = M[i][j]
            q = np.convolve(tf.num.coeffs, _poly_div(clear, tf.den))
            P[i][j] = q
            deg = max(deg, len(q) - 1)
    coeffs = [np.zeros((n, n)) for _ in range(deg + 1)]
    for i in range(n):
        for j in range(n):
            q = P[i][j]
            for k, c in enumerate(q):
                coeffs[k][i, j] = c
    lead = coeffs[deg]
    # block companion pencil for det(sum s^k A_k) = 0
    N = n * deg
    A = np.zeros((N, N))
    E = np.eye(N)
    for k in range(deg - 1):
        A[n * k: n * (k + 1), n * (k + 1): n * (k + 2)] = np.eye(n)
    for k in range(deg):
        A[n * (deg - 1):, n * k: n * (k + 1)] = -coeffs[k]
    E[n * (deg - 1):, n * (deg - 1):] = lead
    from scipy.linalg import eig as geig
    vals = geig(A, E, right=False)
    vals = vals[np.isfinite(vals)]
    spurious = []
    for d in dens:
        spurious.extend(list(d.roots()) * (n - 1))
    keep = []
    for v in vals:
        hit = None
        for i, r in enumerate(spurious):
            if abs(v - r) <= 1e-6 * (1.0 + abs(v)):
                hit = i
                break
        if hit is None:
            keep.append(v)
        else:
            spurious.pop(hit)
    return np.array(keep)


def _poly_div(p: Polynomial, d: Polynomial) -> np.ndarray:
    """Exact ascending-coefficient quotient p/d (d divides p by construction)."""
    q, r = np.polydiv(list(reversed(p.coeffs)), list(reversed(d.coeffs)))
    return np.atleast_1d(q)[::-1]


def check_assumption1(g: HybridGraph) -> LoadBlockVerdict:
    """Stability of the inverse of the load block of the AC Laplacian.

    Detects the structural sufficient conditions first (uniform
    inductive-resistive ratio per AC area; no adjacent load nodes) and falls
    back to numeric roots of det L_L(s).
    """
    load = set(g.load_names)
    if not load:
        return LoadBlockVerdict("holds_trivially", (), "no load nodes")
    for comp in g.ac_components():
        rhos = [e.rho for e in g.ac_edges if e.n in comp]
        if not rhos or max(rhos) - min(rhos) <= 1e-9 * (1.0 + max(rhos)):
            continue
        break
    else:
        return LoadBlockVerdict("holds_trivially", (),
                                "uniform inductive-resistive ratio per area")
    if not any(e.n in load and e.k in load for e in g.ac_edges):
        return LoadBlockVerdict("holds_trivially", (),
                                "single interior node between conversion nodes")
    L = ac_laplacian_tfs(g)
    nc = len(g.conv_names)
    LL = [row[nc:] for row in L[nc:]]
    if len(LL) <= 4:
        det = _det_symbolic(LL)
        if det.num.is_zero():
            raise DegenerateDeterminant("det L_L is identically zero")
        roots = det.simplify().num.roots()
    else:
        roots = _det_roots_eig(LL)
    bad = [complex(r) for r in roots if r.real >= 0]
    verdict = "holds" if not bad else "fails"
    return LoadBlockVerdict(verdict, tuple(bad) if bad else tuple(
        complex(r) for r in roots))


# --------------------------------------------------------------------------
# cable catalog
# --------------------------------------------------------------------------

def load_cable_catalog(path: str | None = None) -> dict:
    """Per-km series impedance catalog (external datasheet values, not
    measured ground truth)."""
    if path is None:
        text = resources.files("acdcdyn").joinpath(
            "data/cables.json").read_text()
    else:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    data = json.loads(text)
    return data["cables"]


def line_impedance(catalog: dict, cable: str, length_m: float,
                   f_hz: float = 50.0, loop: bool = False):
    """Series (r in ohm, l in H) of a cable segment; `loop` doubles the values
    for a two-conductor go-and-return DC circuit."""
    if cable not in catalog:
        raise KeyError(f"unknown cable type {cable!r}")
    entry = catalog[cable]
    km = length_m / 1000.0
    mult = 2.0 if loop else 1.0
    r = mult * entry["r_ohm_per_km"] * km
    l = mult * entry["x_ohm_per_km"] * km / (2.0 * math.pi * f_hz)
    return r, l

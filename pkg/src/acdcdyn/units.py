"""Device and controller transfer-function factories.

Each factory maps a physical parameter record to the small-signal transfer
function of the device: synchronous-machine swing integrator, VSC DC-link
capacitor, PV source sensitivity, turbine/governor droop, and the dual-port
grid-forming (GFM) frequency/DC-voltage controller.  Per-unit bases are
always explicit; nothing is normalized implicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.optimize import brentq

from .lti import Polynomial, RationalTF


class UnitsError(Exception):
    pass


class OutOfRange(UnitsError):
    """Argument outside the physically valid interval."""


class NotCurtailed(UnitsError):
    """PV operating point is not in the curtailed (dP/dV < 0) region."""


@dataclass(frozen=True)
class PerUnitBase:
    """Explicit per-unit base set."""

    S_base: float        # VA
    V_base_ac: float     # V
    V_base_dc: float     # V
    omega_base: float    # rad/s

    def __post_init__(self):
        for name in ("S_base", "V_base_ac", "V_base_dc", "omega_base"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class SgParams:
    """Synchronous generator with turbine/governor."""

    S_n: float           # VA
    P_max: float         # W
    V_n: float           # V
    n_r: float           # 1/s, mechanical speed
    H: float             # s
    k_tg: float          # p.u. governor droop gain
    k_omega: float       # p.u. damping gain
    T1: float            # s
    T2: float            # s

    def __post_init__(self):
        if min(self.S_n, self.P_max, self.V_n, self.n_r, self.H,
               self.T1, self.T2) <= 0:
            raise ValueError("SG parameters must be positive")
        if self.P_max > self.S_n:
            raise ValueError("P_max must not exceed S_n")

    @property
    def omega_r_star(self) -> float:
        return 2.0 * math.pi * self.n_r

    @property
    def inertia_J(self) -> float:
        return 2.0 * self.H * self.S_n / self.omega_r_star**2


@dataclass(frozen=True)
class VscParams:
    """Voltage source converter DC link and virtual output impedance."""

    S_rated: float       # VA
    V_rated: float       # V
    C_dc: float          # F
    v_dc_star: float     # V
    l_virtual: float     # H
    r_virtual: float     # Ohm

    def __post_init__(self):
        if self.C_dc <= 0:
            raise ValueError("C_dc must be positive")
        if min(self.S_rated, self.V_rated, self.v_dc_star) <= 0:
            raise ValueError("ratings and v_dc_star must be positive")
        if self.l_virtual < 0 or self.r_virtual < 0:
            raise ValueError("virtual impedance terms must be nonnegative")


@dataclass(frozen=True)
class PvParams:
    """PV source anchors and curtailed operating voltage."""

    V_mpp: float         # V
    I_mpp: float         # A
    V_oc: float          # V
    I_sc: float          # A
    V_op: float          # V

    def __post_init__(self):
        if not (0 < self.V_mpp < self.V_oc):
            raise ValueError("require 0 < V_mpp < V_oc")
        if not (0 < self.I_mpp < self.I_sc):
            raise ValueError("require 0 < I_mpp < I_sc")
        if not (self.V_mpp <= self.V_op < self.V_oc):
            raise ValueError("require V_mpp <= V_op < V_oc")


@dataclass(frozen=True)
class GfmCtrlParams:
    """Dual-port GFM controller: omega = omega* + (k_p + k_d s/(tau s+1)) dv."""

    k_p: float           # p.u.
    k_d: float           # p.u.
    tau_kd: float        # s (0 flags the improper ideal differentiator)
    omega_star: float = 2.0 * math.pi * 50.0   # rad/s
    v_dc_star: float = 1.0                     # p.u.

    def __post_init__(self):
        if self.k_p <= 0:
            raise ValueError("k_p must be positive")
        if self.k_d < 0 or self.tau_kd < 0:
            raise ValueError("k_d and tau_kd must be nonnegative")


def sm_tf(p: SgParams, per_unit: bool = False) -> RationalTF:
    """Swing integrator 1/(J omega_r* s) in SI, or 1/(2H s) in the machine
    per-unit base."""
    denom = 2.0 * p.H if per_unit else p.inertia_J * p.omega_r_star
    return RationalTF(Polynomial([1.0]), Polynomial([0.0, denom]))


def vsc_dclink_tf(p: VscParams, base: PerUnitBase | None = None,
                  c_extra: float = 0.0) -> RationalTF:
    """DC-link capacitor energy balance 1/(C v_dc* s).

    `c_extra` adds bus capacitance sharing the same DC node.  With `base`
    given, the result maps per-unit power to per-unit DC voltage.
    """
    if c_extra < 0:
        raise ValueError("c_extra must be nonnegative")
    c_total = p.C_dc + c_extra
    coeff = c_total * p.v_dc_star
    if base is not None:
        coeff *= base.V_base_dc / base.S_base
    return RationalTF(Polynomial([1.0]), Polynomial([0.0, coeff]))


def _pv_fit_c2(p: PvParams) -> float:
    """Shape parameter of the exponential I-V fit placing the power maximum
    at V_mpp; I(0) = I_sc and I(V_oc) = 0 hold exactly by construction."""

    def p_prime_at_mpp(c2: float) -> float:
        # stable for small c2: c1*exp(V/(c2 Voc)) = exp((V/Voc-1)/c2)/d
        # with d = 1 - exp(-1/c2)
        d = -math.expm1(-1.0 / c2)
        c1 = math.exp(-1.0 / c2) / d
        c1e = math.exp((p.V_mpp / p.V_oc - 1.0) / c2) / d
        current = p.I_sc * (1.0 - c1e + c1)
        didv = -p.I_sc * c1e / (c2 * p.V_oc)
        return current + p.V_mpp * didv

    return brentq(p_prime_at_mpp, 1e-3, 0.5, xtol=1e-14)


def pv_curve(p: PvParams, V: float) -> float:
    """Current of the fitted exponential single-diode characteristic."""
    if V < 0 or V > p.V_oc:
        raise OutOfRange(f"V = {V} outside [0, {p.V_oc}]")
    c2 = _pv_fit_c2(p)
    c1 = 1.0 / math.expm1(1.0 / c2)
    return p.I_sc * (1.0 - c1 * math.expm1(V / (c2 * p.V_oc)))


def pv_linearize(p: PvParams, base: PerUnitBase) -> float:
    """Per-unit sensitivity k_pv = -(dP/dV at V_op) * V_base_dc / S_base,
    by central finite difference with a 0.1 V step."""
    h = 0.1
    v_hi = min(p.V_op + h, p.V_oc)
    v_lo = p.V_op - h
    p_hi = v_hi * pv_curve(p, v_hi)
    p_lo = v_lo * pv_curve(p, v_lo)
    dpdv = (p_hi - p_lo) / (v_hi - v_lo)
    # require a genuinely negative slope, not finite-difference noise at MPP
    if dpdv >= -1e-6 * p.I_sc:
        raise NotCurtailed("dP/dV >= 0 at the operating voltage")
    return -dpdv * base.V_base_dc / base.S_base


def convert_k_pv(k_pv: float, src: PerUnitBase, dst: PerUnitBase) -> float:
    """Re-express a per-unit DC-voltage/power sensitivity in another base."""
    return k_pv * (dst.V_base_dc / src.V_base_dc) * (src.S_base / dst.S_base)


def turbine_governor_tf(p: SgParams) -> RationalTF:
    """Speed-droop governor -(k_omega + k_tg G1 G2) S_n/P_max with first-order
    lags G_i = 1/(T_i s + 1); maps speed deviation to turbine power."""
    scale = p.S_n / p.P_max
    lag = RationalTF(Polynomial([1.0]),
                     Polynomial([1.0, p.T1]) * Polynomial([1.0, p.T2]))
    return (-scale) * (RationalTF.constant(p.k_omega) + p.k_tg * lag)


def governor_droop_tf(p: SgParams, S_base: float) -> RationalTF:
    """Droop-only governor -k_tg G1 G2 scaled from the machine power base
    (P_max) to the system base; the steady-state gain is -k_tg P_max/S_base."""
    lag = RationalTF(Polynomial([1.0]),
                     Polynomial([1.0, p.T1]) * Polynomial([1.0, p.T2]))
    return (-p.k_tg * p.P_max / S_base) * lag


def sg_damping_tf(p: SgParams, S_base: float, T_w: float = 1.0) -> RationalTF:
    """Damping-torque contribution -k_omega S_n/S_base passed through a
    washout T_w s/(T_w s + 1), so transient damping is retained without
    altering the governor's steady-state droop."""
    if T_w <= 0:
        raise ValueError("washout time constant must be positive")
    gain = -p.k_omega * p.S_n / S_base
    return RationalTF(Polynomial([0.0, gain * T_w]), Polynomial([1.0, T_w]))


def gfm_ctrl_tf(p: GfmCtrlParams) -> RationalTF:
    """PD droop k_p + k_d s/(tau_kd s + 1); improper when tau_kd = 0."""
    if p.tau_kd == 0.0:
        return RationalTF(Polynomial([p.k_p, p.k_d]), Polynomial([1.0]))
    num = Polynomial([p.k_p, p.k_p * p.tau_kd + p.k_d])
    den = Polynomial([1.0, p.tau_kd])
    return RationalTF(num, den)

"""User-facing analyses over closed-loop models: Bode tables, stability
verdicts, analytic gain bounds, resonance-peak extraction, and gain sweeps.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .lti import Pole, StateSpace, freq_response, poles
from .system import ClosedLoopModel, SystemConfig, build


class AnalysisError(Exception):
    pass


class NoInteriorPeak(AnalysisError):
    """Magnitude table is monotone; no interior resonance maximum exists."""


#: DC-link capacitance (p.u., PV base) implied by the published islanded
#: derivative-gain bound; recorded as the exact product form, not re-derived.
C_DC_PU_IMPLIED = 9.9040 * 3.4581 / 4.0

#: Published per-VSC derivative/proportional ratio bounds for the
#: asynchronous two-area configuration (conservative by construction).
ASYNC_RATIO_BOUNDS = (0.2571, 0.5142)


@dataclass(frozen=True)
class BodeTable:
    input: str
    output: str
    f_hz: np.ndarray
    mag_db: np.ndarray
    phase_deg: np.ndarray


@dataclass(frozen=True)
class StabilityResult:
    stable: bool
    nonstructural_poles: tuple[Pole, ...]


@dataclass(frozen=True)
class SweepPoint:
    params: dict
    stable: bool | None
    damping: float | None                 # dominant non-structural pole
    peaks: dict                           # (input, output) -> (f_hz, mag_db)
    error: str = ""


@dataclass(frozen=True)
class SweepResult:
    points: tuple[SweepPoint, ...]


def _model_ss(model) -> StateSpace:
    if isinstance(model, ClosedLoopModel):
        return model.ss
    if isinstance(model, StateSpace):
        return model
    raise TypeError("expected a ClosedLoopModel or StateSpace")


def bode(model, input: str, output: str,
         f_min: float = 1e-2 / (2.0 * math.pi),
         f_max: float = 1e4 / (2.0 * math.pi),
         points: int = 400) -> BodeTable:
    """Log-spaced magnitude/phase table of one closed-loop channel."""
    ss = _model_ss(model)
    if input not in ss.input_names:
        raise KeyError(f"unknown input channel {input!r}")
    if output not in ss.output_names:
        raise KeyError(f"unknown output channel {output!r}")
    f = np.logspace(math.log10(f_min), math.log10(f_max), points)
    fr = freq_response(ss, 2.0 * math.pi * f)
    h = fr.channel(input, output)
    mag_db = 20.0 * np.log10(np.abs(h))
    phase = np.degrees(np.unwrap(np.angle(h)))
    return BodeTable(input, output, f, mag_db, phase)


def stability(model) -> StabilityResult:
    """Stable iff every non-structural pole lies in the open left half-plane."""
    ps = [p for p in poles(_model_ss(model)) if not p.structural]
    return StabilityResult(all(p.value.real < 0 for p in ps), tuple(ps))


def dominant_damping(result: StabilityResult) -> float | None:
    """Damping ratio of the least-damped non-structural pole pair."""
    best = None
    for p in result.nonstructural_poles:
        mag = abs(p.value)
        if mag == 0:
            return 0.0
        zeta = -p.value.real / mag
        if best is None or zeta < best:
            best = zeta
    return best


def bound_islanded_kd(k_p: float, C_dc_pu: float = C_DC_PU_IMPLIED,
                      k_pv: float = 3.4581) -> float:
    """Derivative-gain stability bound k_d < 4 C_dc k_p / k_pv for the
    islanded PV configuration; infinite when the PV is at its power maximum
    (k_pv -> 0)."""
    if k_p <= 0 or C_dc_pu <= 0 or k_pv < 0:
        raise ValueError("arguments must be positive (k_pv nonnegative)")
    if k_pv == 0:
        return math.inf
    return 4.0 * C_dc_pu * k_p / k_pv


def check_ratio_bounds_async(k_p_1: float, k_d_1: float, k_p_2: float,
                             k_d_2: float,
                             bounds: tuple[float, float] = ASYNC_RATIO_BOUNDS
                             ) -> dict:
    """Strict per-VSC derivative/proportional ratio check.  The underlying
    condition is conservative: failing it does not imply instability, and in
    practice larger derivative gains can be selected."""
    if min(k_p_1, k_p_2) <= 0 or min(k_d_1, k_d_2) < 0:
        raise ValueError("gains must be positive (k_d nonnegative)")
    return {"vsc1": k_d_1 / k_p_1 < bounds[0],
            "vsc2": k_d_2 / k_p_2 < bounds[1],
            "note": "conservative bound; larger gains may still be stable"}


def interior_peak(x: np.ndarray, y: np.ndarray,
                  refine_loglog: bool = True) -> tuple[float, float]:
    """Largest interior local maximum of y over x, refined by a 3-point
    quadratic fit (in log-x coordinates when requested)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cand = [i for i in range(1, len(y) - 1)
            if y[i] >= y[i - 1] and y[i] >= y[i + 1]
            and (y[i] > y[i - 1] or y[i] > y[i + 1])]
    if not cand:
        raise NoInteriorPeak("no interior local maximum")
    i = max(cand, key=lambda j: y[j])
    xs = np.log10(x[i - 1:i + 2]) if refine_loglog else x[i - 1:i + 2]
    ys = y[i - 1:i + 2]
    a, b, c = np.polyfit(xs, ys, 2)
    if a < 0:
        xv = -b / (2.0 * a)
        if xs[0] <= xv <= xs[2]:
            xp = 10.0 ** xv if refine_loglog else xv
            return float(xp), float(np.polyval([a, b, c], xv))
    return float(x[i]), float(y[i])


def interior_peaks(x: np.ndarray, y: np.ndarray,
                   refine_loglog: bool = True) -> list[tuple[float, float]]:
    """All interior local maxima of y over x, each refined like
    interior_peak, in ascending x order."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = []
    for i in range(1, len(y) - 1):
        if (y[i] >= y[i - 1] and y[i] >= y[i + 1]
                and (y[i] > y[i - 1] or y[i] > y[i + 1])):
            xs = np.log10(x[i - 1:i + 2]) if refine_loglog else x[i - 1:i + 2]
            a, b, c = np.polyfit(xs, y[i - 1:i + 2], 2)
            if a < 0 and xs[0] <= -b / (2 * a) <= xs[2]:
                xv = -b / (2 * a)
                xp = 10.0 ** xv if refine_loglog else xv
                out.append((float(xp), float(np.polyval([a, b, c], xv))))
            else:
                out.append((float(x[i]), float(y[i])))
    return out


def resonance_peak(table: BodeTable) -> tuple[float, float]:
    """(f_peak in Hz, magnitude peak in dB) of the largest interior
    resonance of a Bode table."""
    return interior_peak(table.f_hz, table.mag_db)


def sweep(builder, grids: dict, channels,
          f_min: float = 1e-2 / (2.0 * math.pi),
          f_max: float = 1e4 / (2.0 * math.pi),
          points: int = 400) -> SweepResult:
    """Evaluate stability and per-channel resonance metrics over the
    Cartesian product of parameter grids.

    `builder` maps keyword parameters to a SystemConfig or ClosedLoopModel.
    Points are independent; failures are recorded per point and the sweep
    continues.
    """
    if not grids or any(len(v) == 0 for v in grids.values()):
        raise ValueError("grids must be non-empty")
    names = list(grids)
    out = []
    for combo in itertools.product(*(grids[n] for n in names)):
        params = dict(zip(names, combo))
        try:
            model = builder(**params)
            if isinstance(model, SystemConfig):
                model = build(model)
            verdict = stability(model)
            peaks = {}
            for cin, cout in channels:
                table = bode(model, cin, cout, f_min, f_max, points)
                try:
                    peaks[(cin, cout)] = resonance_peak(table)
                except NoInteriorPeak:
                    peaks[(cin, cout)] = (math.nan, math.nan)
            out.append(SweepPoint(params, verdict.stable,
                                  dominant_damping(verdict), peaks))
        except Exception as exc:  # per-point isolation by contract
            out.append(SweepPoint(params, None, None, {}, str(exc)))
    return SweepResult(tuple(out))

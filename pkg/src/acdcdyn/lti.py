"""Core LTI machinery: polynomials, rational transfer functions, state-space
realization and interconnection, poles, frequency/time responses, spectra.

All types are immutable after construction and every operation is a pure
function, so evaluation over frequency grids or parameter sweeps can run
concurrently without shared state.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.linalg import expm, matrix_balance


class LtiError(Exception):
    pass


class PoleHit(LtiError):
    """Rational evaluation requested at (or numerically on top of) a pole."""


class ImproperTF(LtiError):
    """Realization requested for a transfer function with deg num > deg den."""


class AlgebraicLoop(LtiError):
    """The feedthrough loop matrix (I - K D) is singular or near-singular."""


class SingularAtFrequency(LtiError):
    """j*omega coincides with an eigenvalue of A at a requested grid point."""


class NoDcGain(LtiError):
    """A requested channel has genuine integrating behavior at s = 0."""


class TooShort(LtiError):
    """Time series too short for spectral analysis."""


class UnstableWarning(UserWarning):
    """Attached to time responses of models with unstable non-structural poles."""


# --------------------------------------------------------------------------
# polynomials and rational functions
# --------------------------------------------------------------------------

def _trim(coeffs: np.ndarray) -> np.ndarray:
    """Drop trailing exactly-zero coefficients, keeping at least one."""
    c = np.atleast_1d(np.asarray(coeffs, dtype=float))
    nz = np.nonzero(c)[0]
    if nz.size == 0:
        return c[:1]
    return c[: nz[-1] + 1]


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial with ascending-degree coefficients."""

    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Sequence[float]):
        c = _trim(np.asarray(coeffs, dtype=float))
        if c.size == 0:
            raise ValueError("empty coefficient list")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite polynomial coefficients")
        object.__setattr__(self, "coeffs", tuple(float(x) for x in c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, s: complex) -> complex:
        # Horner, highest degree first
        acc = 0.0 + 0.0j
        for c in reversed(self.coeffs):
            acc = acc * s + c
        return acc

    def __add__(self, other: "Polynomial") -> "Polynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        a[: len(self.coeffs)] = self.coeffs
        a[: len(other.coeffs)] += other.coeffs
        return Polynomial(a)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-1.0) * other

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(np.convolve(self.coeffs, other.coeffs))
        return Polynomial(np.asarray(self.coeffs) * float(other))

    __rmul__ = __mul__

    def roots(self) -> np.ndarray:
        if self.degree == 0:
            return np.array([], dtype=complex)
        return np.roots(list(reversed(self.coeffs)))

    def is_zero(self) -> bool:
        return len(self.coeffs) == 1 and self.coeffs[0] == 0.0


def poly_from_roots(roots: Iterable[complex], leading: float = 1.0) -> Polynomial:
    c = np.atleast_1d(np.poly(list(roots)))  # descending
    c = np.real_if_close(c, tol=1e6)
    return Polynomial(np.real(c)[::-1] * leading)


@dataclass(frozen=True)
class RationalTF:
    """Scalar transfer function num(s)/den(s) with real coefficients."""

    num: Polynomial
    den: Polynomial

    def __post_init__(self):
        if self.den.is_zero():
            raise ValueError("denominator identically zero")

    @classmethod
    def from_coeffs(cls, num: Sequence[float], den: Sequence[float]) -> "RationalTF":
        return cls(Polynomial(num), Polynomial(den))

    @classmethod
    def constant(cls, gain: float) -> "RationalTF":
        return cls(Polynomial([gain]), Polynomial([1.0]))

    @property
    def is_proper(self) -> bool:
        return self.num.degree <= self.den.degree or self.num.is_zero()

    def __call__(self, s: complex) -> complex:
        return tf_eval(self, s)

    def __add__(self, other: "RationalTF") -> "RationalTF":
        other = _as_tf(other)
        return RationalTF(self.num * other.den + other.num * self.den,
                          self.den * other.den)

    __radd__ = __add__

    def __sub__(self, other: "RationalTF") -> "RationalTF":
        return self + (-1.0) * _as_tf(other)

    def __mul__(self, other):
        if isinstance(other, RationalTF):
            return RationalTF(self.num * other.num, self.den * other.den)
        return RationalTF(self.num * float(other), self.den)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "RationalTF":
        other = _as_tf(other)
        if other.num.is_zero():
            raise ZeroDivisionError("division by the zero transfer function")
        return RationalTF(self.num * other.den, self.den * other.num)

    def __neg__(self) -> "RationalTF":
        return (-1.0) * self

    def simplify(self, tol: float = 1e-7) -> "RationalTF":
        """Cancel numerator/denominator root pairs matching within relative tol
        and normalize the denominator to be monic."""
        if self.num.is_zero():
            return RationalTF(Polynomial([0.0]), Polynomial([1.0]))
        nr = list(self.num.roots())
        dr = list(self.den.roots())
        n_lead = self.num.coeffs[-1]
        d_lead = self.den.coeffs[-1]
        kept_n = []
        for r in nr:
            hit = None
            for i, q in enumerate(dr):
                if abs(r - q) <= tol * (1.0 + abs(r)):
                    hit = i
                    break
            if hit is None:
                kept_n.append(r)
            else:
                dr.pop(hit)
        gain = n_lead / d_lead
        return RationalTF(poly_from_roots(kept_n, leading=gain),
                          poly_from_roots(dr, leading=1.0))


def _as_tf(x) -> RationalTF:
    if isinstance(x, RationalTF):
        return x
    return RationalTF.constant(float(x))


def tf_eval(tf: RationalTF, s: complex) -> complex:
    """Pointwise rational evaluation num(s)/den(s)."""
    d = tf.den(s)
    if abs(d) < 1e-300:
        raise PoleHit(f"denominator vanishes at s = {s}")
    return tf.num(s) / d


# --------------------------------------------------------------------------
# state space
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class StateSpace:
    """Real (A, B, C, D) with named input and output channels."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = A.shape[0] if A.size else 0
        if A.size == 0:
            A = np.zeros((0, 0))
        p, m = D.shape
        B = np.asarray(self.B, dtype=float).reshape(n, m)
        C = np.asarray(self.C, dtype=float).reshape(p, n)
        if A.shape != (n, n):
            raise ValueError("A must be square")
        for M in (A, B, C, D):
            if not np.all(np.isfinite(M)):
                raise ValueError("non-finite state-space entries")
        if len(self.input_names) != m or len(self.output_names) != p:
            raise ValueError("channel name lists must match B/C dimensions")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "output_names", tuple(self.output_names))

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.D.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.D.shape[0]

    @classmethod
    def static(cls, gain, input_names=("u",), output_names=("y",)) -> "StateSpace":
        D = np.atleast_2d(np.asarray(gain, dtype=float))
        p, m = D.shape
        return cls(np.zeros((0, 0)), np.zeros((0, m)), np.zeros((p, 0)), D,
                   tuple(input_names), tuple(output_names))


def tf_to_ss(tf: RationalTF, input_name: str = "u",
             output_name: str = "y") -> StateSpace:
    """Controllable-canonical realization of a proper rational function,
    diagonally balanced to keep ``norm(A)`` near the spectral radius."""
    if not tf.is_proper:
        raise ImproperTF(
            f"deg num = {tf.num.degree} > deg den = {tf.den.degree}")
    den = np.asarray(tf.den.coeffs, dtype=float)
    num = np.asarray(tf.num.coeffs, dtype=float)
    lead = den[-1]
    den = den / lead
    num = num / lead
    n = len(den) - 1
    b = np.zeros(n + 1)
    b[: len(num)] = num
    d = b[n]
    if n == 0:
        return StateSpace.static([[d]], (input_name,), (output_name,))
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -den[:n]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = (b[:n] - den[:n] * d).reshape(1, n)
    D = np.array([[d]])
    A_b, T = matrix_balance(A, permute=False)
    t = np.diag(T)
    B_b = B / t[:, None]
    C_b = C * t[None, :]
    return StateSpace(A_b, B_b, C_b, D, (input_name,), (output_name,))


def integrator(gain: float = 1.0, input_name: str = "u",
               output_name: str = "y") -> StateSpace:
    return StateSpace(np.zeros((1, 1)), [[1.0]], [[gain]], [[0.0]],
                      (input_name,), (output_name,))


# --------------------------------------------------------------------------
# interconnection
# --------------------------------------------------------------------------

def compose(blocks: Mapping[str, StateSpace],
            connections: Sequence[tuple[str, str, float]],
            external_inputs: Sequence[str],
            external_outputs: Sequence[str]) -> StateSpace:
    """General signal-flow interconnection with summing junctions.

    ``blocks`` maps a label to a StateSpace; channels are referenced as
    ``"label.channel"``.  Each connection is ``(dst_input, src, gain)`` where
    ``src`` is either a block output or one of the external input names.
    Multiple connections to the same input sum.  The result exposes exactly
    ``external_inputs`` -> ``external_outputs``.
    """
    labels = list(blocks)
    in_index: dict[str, int] = {}
    out_index: dict[str, int] = {}
    n_states = m_tot = p_tot = 0
    for lbl in labels:
        ss = blocks[lbl]
        for ch in ss.input_names:
            key = f"{lbl}.{ch}"
            if key in in_index:
                raise ValueError(f"duplicate input channel {key}")
            in_index[key] = m_tot
            m_tot += 1
        for ch in ss.output_names:
            key = f"{lbl}.{ch}"
            if key in out_index:
                raise ValueError(f"duplicate output channel {key}")
            out_index[key] = p_tot
            p_tot += 1
        n_states += ss.n_states

    A = np.zeros((n_states, n_states))
    B = np.zeros((n_states, m_tot))
    C = np.zeros((p_tot, n_states))
    D = np.zeros((p_tot, m_tot))
    ix = iu = iy = 0
    for lbl in labels:
        ss = blocks[lbl]
        n, m, p = ss.n_states, ss.n_inputs, ss.n_outputs
        A[ix:ix + n, ix:ix + n] = ss.A
        B[ix:ix + n, iu:iu + m] = ss.B
        C[iy:iy + p, ix:ix + n] = ss.C
        D[iy:iy + p, iu:iu + m] = ss.D
        ix, iu, iy = ix + n, iu + m, iy + p

    ext_in = {name: j for j, name in enumerate(external_inputs)}
    K = np.zeros((m_tot, p_tot))
    E = np.zeros((m_tot, len(external_inputs)))
    for dst, src, gain in connections:
        if dst not in in_index:
            raise KeyError(f"unknown input channel {dst!r}")
        i = in_index[dst]
        if src in out_index:
            K[i, out_index[src]] += gain
        elif src in ext_in:
            E[i, ext_in[src]] += gain
        else:
            raise KeyError(f"unknown source channel {src!r}")

    F = np.zeros((len(external_outputs), p_tot))
    for i, name in enumerate(external_outputs):
        if name not in out_index:
            raise KeyError(f"unknown output channel {name!r}")
        F[i, out_index[name]] = 1.0

    loop = np.eye(m_tot) - K @ D
    if np.linalg.cond(loop) > 1e12:
        raise AlgebraicLoop("feedthrough loop matrix is near singular")
    M = np.linalg.inv(loop)
    BM = B @ M
    A_cl = A + BM @ K @ C
    B_cl = BM @ E
    C_cl = F @ (C + D @ M @ K @ C)
    D_cl = F @ D @ M @ E
    return StateSpace(A_cl, B_cl, C_cl, D_cl,
                      tuple(external_inputs), tuple(external_outputs))


def series(first: StateSpace, second: StateSpace) -> StateSpace:
    """SISO-channel chain: every output of ``first`` feeds the matching input
    position of ``second``."""
    if first.n_outputs != second.n_inputs:
        raise ValueError("dimension mismatch in series connection")
    conns = [(f"b.{ci}", f"a.{co}", 1.0)
             for co, ci in zip(first.output_names, second.input_names)]
    conns += [(f"a.{c}", c, 1.0) for c in first.input_names]
    return compose({"a": first, "b": second}, conns,
                   list(first.input_names),
                   [f"b.{c}" for c in second.output_names])


# --------------------------------------------------------------------------
# analysis primitives
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Pole:
    value: complex
    structural: bool


def _eig_structural_mask(A: np.ndarray, eigvals: np.ndarray):
    """Mask of structural (reference) modes: semisimple eigenvalues at the
    origin, within 1e-7 of the spectral radius scale.  Defective origin
    poles (e.g. a double integrator) are genuine and left untagged."""
    n = A.shape[0]
    if n == 0:
        return np.zeros(0, dtype=bool)
    rho = float(np.max(np.abs(eigvals))) if eigvals.size else 0.0
    tol = max(1e-7 * rho, 1e-12)
    near_zero = np.abs(eigvals) <= tol
    k = int(np.count_nonzero(near_zero))
    if k == 0:
        return near_zero
    sv = np.linalg.svd(A, compute_uv=False)
    nullity = int(np.count_nonzero(sv <= tol))
    mask = np.zeros(n, dtype=bool)
    order = np.argsort(np.abs(eigvals))
    tagged = 0
    for i in order:
        if near_zero[i] and tagged < nullity:
            mask[i] = True
            tagged += 1
    return mask


def poles(ss: StateSpace) -> list[Pole]:
    """Eigenvalues of A; structural (angle-reference) zero modes tagged so
    stability verdicts can exclude them."""
    eigvals = np.linalg.eigvals(ss.A) if ss.n_states else np.array([])
    mask = _eig_structural_mask(ss.A, eigvals)
    return [Pole(complex(v), bool(m)) for v, m in zip(eigvals, mask)]


@dataclass(frozen=True)
class FrequencyResponse:
    omega: np.ndarray                   # rad/s, ascending
    values: np.ndarray                  # (n_omega, p, m) complex
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]

    def channel(self, input_name: str, output_name: str) -> np.ndarray:
        i = self.input_names.index(input_name)
        o = self.output_names.index(output_name)
        return self.values[:, o, i]


def freq_response(ss: StateSpace, omega_grid) -> FrequencyResponse:
    """C (jwI - A)^-1 B + D by exact complex linear solve per grid point."""
    omega = np.asarray(omega_grid, dtype=float)
    if omega.ndim != 1 or omega.size == 0:
        raise ValueError("omega grid must be a non-empty 1-D array")
    if np.any(omega <= 0) or np.any(np.diff(omega) <= 0):
        raise ValueError("omega grid must be positive and strictly ascending")
    n = ss.n_states
    vals = np.empty((omega.size, ss.n_outputs, ss.n_inputs), dtype=complex)
    if n == 0:
        vals[:] = ss.D
        return FrequencyResponse(omega, vals, ss.input_names, ss.output_names)
    eigvals = np.linalg.eigvals(ss.A)
    I = np.eye(n)
    for i, w in enumerate(omega):
        s = 1j * w
        if np.min(np.abs(s - eigvals)) < 1e-9 * (1.0 + abs(s)):
            raise SingularAtFrequency(f"omega = {w} rad/s lies on a pole of A")
        vals[i] = ss.C @ np.linalg.solve(s * I - ss.A, ss.B) + ss.D
    return FrequencyResponse(omega, vals, ss.input_names, ss.output_names)


@dataclass(frozen=True)
class TimeSeries:
    t: np.ndarray
    channels: dict[str, np.ndarray]

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        if t.size < 2:
            raise ValueError("time series needs at least two samples")
        dt = np.diff(t)
        if not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0) or dt[0] <= 0:
            raise ValueError("time grid must be uniform with dt > 0")
        for name, x in self.channels.items():
            if len(x) != t.size:
                raise ValueError(f"channel {name!r} length mismatch")
        object.__setattr__(self, "t", t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])


def step_response(ss: StateSpace, input_name: str, T: float,
                  dt: float) -> TimeSeries:
    """Unit-step response on the named input via exact zero-order-hold
    discretization of (A, B) over the step dt.  All outputs are returned."""
    if dt <= 0 or dt > T / 100.0:
        raise ValueError("require 0 < dt <= T/100")
    j = ss.input_names.index(input_name)
    for p in poles(ss):
        if not p.structural and p.value.real > 0:
            warnings.warn("model has unstable non-structural poles",
                          UnstableWarning, stacklevel=2)
            break
    n = ss.n_states
    steps = int(round(T / dt))
    t = np.arange(steps + 1) * dt
    y = np.empty((steps + 1, ss.n_outputs))
    b = ss.B[:, j:j + 1]
    d = ss.D[:, j]
    if n == 0:
        y[:] = d
        return TimeSeries(t, dict(zip(ss.output_names, y.T)))
    M = np.zeros((n + 1, n + 1))
    M[:n, :n] = ss.A
    M[:n, n:] = b
    Md = expm(M * dt)
    Ad = Md[:n, :n]
    Bd = Md[:n, n]
    x = np.zeros(n)
    for i in range(steps + 1):
        y[i] = ss.C @ x + d
        x = Ad @ x + Bd
    return TimeSeries(t, dict(zip(ss.output_names, y.T)))


def dc_gain(ss: StateSpace, residue_tol: float = 1e-6) -> np.ndarray:
    """Steady-state gain -C A^-1 B + D with structural zero modes deflated.

    Uses an ordered real Schur form: eigenvalues at the origin are sorted into
    a trailing block and treated as angle-reference modes provided their
    residue vanishes.  Raises NoDcGain when a genuinely integrating mode
    (nonzero residue at the origin, or a defective origin cluster) is present.
    """
    from scipy.linalg import schur

    n = ss.n_states
    if n == 0:
        return ss.D.copy()
    rho = float(np.max(np.abs(np.linalg.eigvals(ss.A))))
    tol = max(1e-7 * rho, 1e-12)
    T, Q, k = schur(ss.A, output="real",
                    sort=lambda re, im: np.hypot(re, im) > tol)
    Bq = Q.T @ ss.B
    Cq = ss.C @ Q
    scale = 1.0 + float(np.linalg.norm(ss.B)) * float(np.linalg.norm(ss.C))
    if k == n:
        return ss.D - Cq @ np.linalg.solve(T, Bq)
    T11, T12, T22 = T[:k, :k], T[:k, k:], T[k:, k:]
    B1, B2 = Bq[:k], Bq[k:]
    C1, C2 = Cq[:, :k], Cq[:, k:]
    if np.linalg.norm(T22) > tol * max(1.0, rho):
        raise NoDcGain("defective pole cluster at the origin")
    if k == 0:
        if np.max(np.abs(C2 @ B2)) > residue_tol * scale:
            raise NoDcGain("integrating mode with nonzero residue at s=0")
        return ss.D.copy()
    X = np.linalg.solve(T11, T12)            # T11^-1 T12
    residue = (C2 - C1 @ X) @ B2
    if np.max(np.abs(residue)) > residue_tol * scale:
        raise NoDcGain("integrating mode with nonzero residue at s=0")
    Y1 = np.linalg.solve(T11, B1)            # T11^-1 B1
    Y2 = np.linalg.solve(T11, X @ B2)        # T11^-2 T12 B2
    return ss.D - C1 @ Y1 - C1 @ Y2


@dataclass(frozen=True)
class Spectrum:
    freq_hz: np.ndarray
    magnitude: np.ndarray

    def peak(self) -> tuple[float, float]:
        i = int(np.argmax(self.magnitude))
        return float(self.freq_hz[i]), float(self.magnitude[i])


def fft_magnitude(ts: TimeSeries, channel: str) -> Spectrum:
    """Single-sided magnitude spectrum after mean removal; frequency
    resolution 1/(N dt)."""
    x = np.asarray(ts.channels[channel], dtype=float)
    n = x.size
    if n < 16:
        raise TooShort(f"need at least 16 samples, got {n}")
    x = x - np.mean(x)
    mag = np.abs(np.fft.rfft(x)) * 2.0 / n
    freq = np.fft.rfftfreq(n, ts.dt)
    return Spectrum(freq, mag)

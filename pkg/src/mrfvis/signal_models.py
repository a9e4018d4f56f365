"""Signal models for classical and fingerprinting-style MR sequences.

Two families are covered:

* closed-form multi-echo spin-echo (TSE) and inversion-recovery (IR)
  curves, evaluated on a uniform echo/inversion-time axis, and
* gradient-spoiled FISP trains driven by an arbitrary flip-angle
  sequence, simulated with extended-phase-graph (EPG) configuration
  states.

All times are in milliseconds, all angles in degrees. Signals are
dimensionless (proton density ``m0`` sets the overall scale).

EPG conventions used throughout: RF pulses are applied with a constant
0-degree phase, so configuration states stay purely imaginary in the
transverse channel and purely real longitudinally. The echo of each TR
is the magnitude of the zeroth transverse configuration directly after
the pulse, decayed to the echo time ``te`` (default ``tr / 2``). The
unbalanced spoiler gradient advances every transverse order by one per
TR and is applied after the echo.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit, prange

from .errors import DomainError

# Transverse configuration orders beyond this bound carry amplitudes
# below double-precision relevance for the TR/T2 regimes supported here.
MAX_EPG_ORDER = 256

SignalCurve = np.ndarray
"""1-D float64 array of dimensionless signal samples."""


@dataclass(frozen=True)
class TissueParams:
    """Relaxation parameters of one tissue: ``t1``/``t2`` in ms, ``m0`` unitless."""

    t1: float
    t2: float
    m0: float = 1.0

    def __post_init__(self):
        if not (self.t1 > 0 and self.t2 > 0):
            raise DomainError(f"relaxation times must be positive, got t1={self.t1}, t2={self.t2}")
        if not self.m0 > 0:
            raise DomainError(f"m0 must be positive, got {self.m0}")


@dataclass(frozen=True)
class ClassicalTiming:
    """Timing of a closed-form sequence.

    ``te`` is the echo-time axis for TSE (a span, sampled uniformly with
    ``n_samples`` points) and the single fixed echo time for IR. ``ti``
    is the inversion-time span for IR and unused for TSE.
    """

    tr: float
    te: tuple[float, ...]
    ti: tuple[float, ...] = ()
    n_samples: int = 1000

    def __post_init__(self):
        if self.tr < 0:
            raise DomainError(f"tr must be >= 0, got {self.tr}")
        for name, vec in (("te", self.te), ("ti", self.ti)):
            if any(v < 0 for v in vec):
                raise DomainError(f"{name} values must be >= 0, got {vec}")
            if any(b <= a for a, b in zip(vec, vec[1:])):
                raise DomainError(f"{name} values must be strictly increasing, got {vec}")
        if self.n_samples < 1:
            raise DomainError(f"n_samples must be >= 1, got {self.n_samples}")


@dataclass(frozen=True)
class SequenceSpec:
    """A FISP acquisition: flip-angle train, timing and transmit scale."""

    flip_train: np.ndarray
    tr: float
    te: float = -1.0  # -1 selects the tr/2 midpoint echo
    inversion: bool = True
    b1_scale: float = 1.0

    def __post_init__(self):
        train = np.ascontiguousarray(np.asarray(self.flip_train, dtype=np.float64))
        object.__setattr__(self, "flip_train", train)
        object.__setattr__(self, "te", self.tr / 2.0 if self.te < 0 else float(self.te))
        if train.ndim != 1 or train.size < 1:
            raise DomainError("flip_train must be a non-empty 1-D sequence of angles")
        if np.any(train < 0.0) or np.any(train > 180.0):
            raise DomainError("flip angles must lie in [0, 180] degrees")
        if not (self.tr > self.te >= 0.0):
            raise DomainError(f"need tr > te >= 0, got tr={self.tr}, te={self.te}")
        if not (0.0 < self.b1_scale <= 2.0):
            raise DomainError(f"b1_scale must be in (0, 2], got {self.b1_scale}")

    def __eq__(self, other):
        if not isinstance(other, SequenceSpec):
            return NotImplemented
        return (
            np.array_equal(self.flip_train, other.flip_train)
            and self.tr == other.tr
            and self.te == other.te
            and self.inversion == other.inversion
            and self.b1_scale == other.b1_scale
        )


@dataclass
class EpgState:
    """Single-sided EPG configuration state.

    ``f_plus[k]`` holds the transverse configuration F(k) for k >= 0,
    ``f_minus[k]`` holds conj(F(-k)); index 0 of ``f_minus`` is the
    redundant mirror of ``f_plus[0]`` kept for closed-form operator
    application. ``z[k]`` is the longitudinal configuration, real-valued
    for the 0-phase pulses used here.
    """

    f_plus: np.ndarray
    f_minus: np.ndarray
    z: np.ndarray
    max_order: int

    @classmethod
    def equilibrium(cls, m0: float, max_order: int) -> "EpgState":
        """Thermal equilibrium: all configurations empty except z[0] = m0."""
        k = max_order + 1
        state = cls(
            f_plus=np.zeros(k, dtype=np.complex128),
            f_minus=np.zeros(k, dtype=np.complex128),
            z=np.zeros(k, dtype=np.complex128),
            max_order=max_order,
        )
        state.z[0] = m0
        return state

    def copy(self) -> "EpgState":
        return EpgState(self.f_plus.copy(), self.f_minus.copy(), self.z.copy(), self.max_order)


def epg_rf_rotation(state: EpgState, alpha_deg: float, phase_deg: float = 0.0) -> EpgState:
    """Apply an ideal RF pulse, mixing (F(k), conj(F(-k)), Z(k)) at every order.

    The mixing matrix is unitary for on-resonance ideal pulses, so the
    per-order quantity (|F|^2 + |conj(F(-k))|^2) / 2 + |Z|^2 is conserved.
    """
    if not (0.0 <= alpha_deg < 360.0):
        raise DomainError(f"alpha must be in [0, 360) degrees, got {alpha_deg}")
    a = np.deg2rad(alpha_deg)
    p = np.deg2rad(phase_deg)
    c2 = np.cos(a / 2.0) ** 2
    s2 = np.sin(a / 2.0) ** 2
    sa = np.sin(a)
    ca = np.cos(a)
    eip = np.exp(1j * p)
    t = np.array(
        [
            [c2, eip**2 * s2, -1j * eip * sa],
            [np.conj(eip) ** 2 * s2, c2, 1j * np.conj(eip) * sa],
            [-0.5j * np.conj(eip) * sa, 0.5j * eip * sa, ca],
        ],
        dtype=np.complex128,
    )
    stacked = t @ np.vstack([state.f_plus, state.f_minus, state.z])
    return EpgState(stacked[0], stacked[1], stacked[2], state.max_order)


def epg_relax_shift(state: EpgState, tr: float, p: TissueParams) -> EpgState:
    """Relax all configurations over ``tr`` then apply one unbalanced-gradient shift.

    Transverse states decay with E2, longitudinal with E1; z[0] regrows
    towards m0. The shift advances every transverse order by +1, feeding
    the new F(0) from the mirrored negative branch.
    """
    if not tr > 0:
        raise DomainError(f"tr must be > 0, got {tr}")
    e1 = np.exp(-tr / p.t1)
    e2 = np.exp(-tr / p.t2)
    fp = state.f_plus * e2
    fm = state.f_minus * e2
    z = state.z * e1
    z[0] += p.m0 * (1.0 - e1)
    fp[1:] = fp[:-1]
    fm[:-1] = fm[1:]
    fm[-1] = 0.0
    fp[0] = np.conj(fm[0])
    return EpgState(fp, fm, z, state.max_order)


def default_max_order(n_pulses: int) -> int:
    return min(n_pulses + 1, MAX_EPG_ORDER)


def epg_fisp(p: TissueParams, s: SequenceSpec, max_order: int | None = None) -> SignalCurve:
    """Simulate an unbalanced FISP train, one echo magnitude per flip angle.

    Effective pulse angles are ``b1_scale`` times the nominal train. When
    ``s.inversion`` is set, a leading 180-degree pulse (also scaled by
    ``b1_scale``) precedes the train by one TR. Echoes are |F(0)| right
    after each pulse, decayed by exp(-te/t2).
    """
    order = default_max_order(s.flip_train.size) if max_order is None else int(max_order)
    state = EpgState.equilibrium(p.m0, order)
    ete2 = np.exp(-s.te / p.t2)
    if s.inversion:
        state = epg_rf_rotation(state, 180.0 * s.b1_scale)
        state = epg_relax_shift(state, s.tr, p)
    out = np.empty(s.flip_train.size, dtype=np.float64)
    for i, alpha in enumerate(s.flip_train):
        state = epg_rf_rotation(state, alpha * s.b1_scale)
        out[i] = np.abs(state.f_plus[0]) * ete2
        state = epg_relax_shift(state, s.tr, p)
    return out


@njit(parallel=True, cache=True)
def _fisp_batch(t1s, t2s, m0s, b1s, flips_rad, tr, te, inversion, order):
    """Real-valued EPG recursion for many (t1, t2, m0, b1) atoms at once.

    With 0-phase pulses F states are purely imaginary; ``fp``/``fm`` hold
    their imaginary parts, which keeps the whole recursion in float64.
    """
    n_atoms = t1s.size
    n_pulses = flips_rad.size
    out = np.empty((n_atoms, n_pulses), dtype=np.float64)
    inv_angle = np.pi  # nominal inversion, scaled per atom below
    for a in prange(n_atoms):
        t1 = t1s[a]
        t2 = t2s[a]
        m0 = m0s[a]
        b1 = b1s[a]
        e1 = np.exp(-tr / t1)
        e2 = np.exp(-tr / t2)
        ete2 = np.exp(-te / t2)
        regrow = m0 * (1.0 - e1)
        fp = np.zeros(order)
        fm = np.zeros(order)
        z = np.zeros(order)
        z[0] = m0

        n_steps = n_pulses + 1 if inversion else n_pulses
        for step in range(n_steps):
            if inversion and step == 0:
                ang = inv_angle * b1
            else:
                idx = step - 1 if inversion else step
                ang = flips_rad[idx] * b1
            c2 = np.cos(ang / 2.0) ** 2
            s2 = np.sin(ang / 2.0) ** 2
            sa = np.sin(ang)
            ca = np.cos(ang)
            for k in range(order):
                fpk = fp[k]
                fmk = fm[k]
                zk = z[k]
                fp[k] = c2 * fpk + s2 * fmk - sa * zk
                fm[k] = s2 * fpk + c2 * fmk + sa * zk
                z[k] = 0.5 * sa * (fpk - fmk) + ca * zk
            if not (inversion and step == 0):
                idx = step - 1 if inversion else step
                out[a, idx] = abs(fp[0]) * ete2
            # relax over one TR, then shift all transverse orders by +1
            for k in range(order):
                fp[k] *= e2
                fm[k] *= e2
                z[k] *= e1
            z[0] += regrow
            for k in range(order - 1, 0, -1):
                fp[k] = fp[k - 1]
            for k in range(order - 1):
                fm[k] = fm[k + 1]
            fm[order - 1] = 0.0
            fp[0] = -fm[0]
    return out


def fisp_curves(t1s, t2s, m0s, b1s, s: SequenceSpec, max_order: int | None = None) -> np.ndarray:
    """Vectorized `epg_fisp` over parameter arrays; rows follow the input order."""
    t1s = np.ascontiguousarray(t1s, dtype=np.float64)
    t2s = np.ascontiguousarray(t2s, dtype=np.float64)
    m0s = np.ascontiguousarray(np.broadcast_to(m0s, t1s.shape), dtype=np.float64)
    b1s = np.ascontiguousarray(np.broadcast_to(b1s, t1s.shape), dtype=np.float64)
    if np.any(t1s <= 0) or np.any(t2s <= 0) or np.any(m0s <= 0):
        raise DomainError("t1, t2 and m0 must all be positive")
    order = default_max_order(s.flip_train.size) if max_order is None else int(max_order)
    flips_rad = np.deg2rad(s.flip_train * s.b1_scale)
    return _fisp_batch(t1s, t2s, m0s, b1s, flips_rad, s.tr, s.te, s.inversion, order)


def _echo_axis(bounds: tuple[float, ...], n_samples: int) -> np.ndarray:
    lo, hi = bounds[0], bounds[-1]
    if n_samples == 1:
        return np.array([lo], dtype=np.float64)
    return np.linspace(lo, hi, n_samples)


def tse_signal(p: TissueParams, t: ClassicalTiming) -> SignalCurve:
    """Multi-echo TSE curve: m0 * (1 - exp(-tr/t1)) * exp(-te_i/t2).

    Sampled at ``n_samples`` echo times uniformly spanning the ``te`` bounds.
    """
    if not t.te:
        raise DomainError("tse_signal requires a non-empty te span")
    te = _echo_axis(t.te, t.n_samples)
    return p.m0 * (1.0 - np.exp(-t.tr / p.t1)) * np.exp(-te / p.t2)


def ir_signal(p: TissueParams, t: ClassicalTiming) -> SignalCurve:
    """Inversion-recovery curve: m0 * (1 - 2 exp(-ti_i/t1) + exp(-tr/t1)) * exp(-te/t2).

    Sampled at ``n_samples`` inversion times uniformly spanning the ``ti``
    bounds; ``t.te[0]`` is the fixed echo time.
    """
    if not t.ti:
        raise DomainError("ir_signal requires a non-empty ti span")
    te = t.te[0] if t.te else 0.0
    ti = _echo_axis(t.ti, t.n_samples)
    return p.m0 * (1.0 - 2.0 * np.exp(-ti / p.t1) + np.exp(-t.tr / p.t1)) * np.exp(-te / p.t2)


def parse_flip_train(text: str) -> np.ndarray:
    """Parse a flip-angle train: one angle in degrees per line, '#' comments."""
    angles = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            angles.append(float(line))
        except ValueError:
            raise DomainError(f"line {lineno}: not a flip angle: {raw!r}") from None
    if not angles:
        raise DomainError("flip-angle file contains no angles")
    train = np.array(angles, dtype=np.float64)
    if np.any(train < 0.0) or np.any(train > 180.0):
        raise DomainError("flip angles must lie in [0, 180] degrees")
    return train


def load_flip_train(path: str | Path) -> np.ndarray:
    return parse_flip_train(Path(path).read_text())


def bundled_flip_train(name: str) -> np.ndarray:
    """Load one of the flip trains shipped with the package (e.g. 'jiang1000')."""
    from importlib.resources import files

    resource = files("mrfvis.data").joinpath(f"{name}.txt")
    if not resource.is_file():
        raise DomainError(f"no bundled flip train named {name!r}")
    return parse_flip_train(resource.read_text())

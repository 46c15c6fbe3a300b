"""Cascade-of-biquads filter model.

A filter is a cascade of second-order sections

    H(z) = H0 * prod_m (a0m + a1m*z + z**2) / (b0m + b1m*z + z**2)

together with a nominal passband group delay tau carried alongside the
coefficients during optimization.  The free variables of a design are

    x = [a01, a11, b01, b11, ..., a0J, a1J, b0J, b1J, H0, tau]

Sections flagged as ``zeroed`` have a0m = b0m pinned to zero, which turns
them into first-order factors and lets the cascade realize odd filter
orders.

Everything here is plain numpy; evaluation routines are vectorized over
frequency and all derivatives are analytic.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateSection, PoleOnGrid

__all__ = [
    "Biquad",
    "SosCascade",
    "DesignState",
    "ErrorTerms",
    "response",
    "group_delay",
    "response_gradient",
    "delay_gradient",
    "error_terms",
    "stability_margins",
    "pole_radii",
    "max_pole_radius",
    "poles",
    "zeros",
    "cascade_from_zpk",
    "apply_delta",
    "write_coefficients",
    "read_coefficients",
    "coefficients_to_text",
    "coefficients_from_text",
]

# Magnitudes below this are treated as exact zeros of a denominator.
_TINY = 1e-14


@dataclass(frozen=True)
class Biquad:
    """One section (a0 + a1*z + z**2) / (b0 + b1*z + z**2)."""

    a0: float
    a1: float
    b0: float
    b1: float


@dataclass(frozen=True)
class SosCascade:
    """Cascade of biquads with a positive overall gain ``h0``.

    ``zeroed[m]`` marks section m as first-order: a0m and b0m are pinned at
    zero and stay out of the optimization.
    """

    h0: float
    sections: tuple[Biquad, ...]
    zeroed: tuple[bool, ...] = ()

    def __post_init__(self):
        if not self.zeroed:
            object.__setattr__(self, "zeroed", (False,) * len(self.sections))
        if len(self.zeroed) != len(self.sections):
            raise ValueError("zeroed mask length must match section count")
        if not (self.h0 > 0.0):
            raise ValueError("overall gain h0 must be strictly positive")
        for m, (s, z) in enumerate(zip(self.sections, self.zeroed)):
            if z and (s.a0 != 0.0 or s.b0 != 0.0):
                raise ValueError(f"section {m} is zeroed but has nonzero a0/b0")

    @property
    def num_sections(self) -> int:
        return len(self.sections)

    @property
    def order(self) -> int:
        return 2 * self.num_sections - sum(self.zeroed)

    @property
    def num_coeffs(self) -> int:
        # 4 per section plus the gain, pinned or not
        return 4 * self.num_sections + 1

    def coeff_arrays(self):
        """Return (a0, a1, b0, b1) as float arrays of length J."""
        J = self.num_sections
        a0 = np.empty(J)
        a1 = np.empty(J)
        b0 = np.empty(J)
        b1 = np.empty(J)
        for m, s in enumerate(self.sections):
            a0[m], a1[m], b0[m], b1[m] = s.a0, s.a1, s.b0, s.b1
        return a0, a1, b0, b1

    def to_vector(self) -> np.ndarray:
        """Coefficient vector [a01, a11, b01, b11, ..., H0]."""
        v = np.empty(self.num_coeffs)
        for m, s in enumerate(self.sections):
            v[4 * m : 4 * m + 4] = (s.a0, s.a1, s.b0, s.b1)
        v[-1] = self.h0
        return v

    @classmethod
    def from_vector(cls, v, zeroed=()) -> "SosCascade":
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or (v.size - 1) % 4 != 0:
            raise ValueError("coefficient vector must have length 4*J + 1")
        J = (v.size - 1) // 4
        sections = tuple(
            Biquad(v[4 * m], v[4 * m + 1], v[4 * m + 2], v[4 * m + 3])
            for m in range(J)
        )
        return cls(h0=float(v[-1]), sections=sections, zeroed=tuple(zeroed))

    def pinned_indices(self) -> tuple[int, ...]:
        """Coefficient-vector indices pinned at zero by the zeroed mask."""
        out = []
        for m, z in enumerate(self.zeroed):
            if z:
                out.extend((4 * m, 4 * m + 2))
        return tuple(out)


@dataclass(frozen=True)
class DesignState:
    """A cascade plus its nominal passband delay, one point of the iteration."""

    cascade: SosCascade
    tau: float
    iteration: int = 0

    @property
    def num_vars(self) -> int:
        return self.cascade.num_coeffs + 1

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.cascade.to_vector(), [self.tau]])


def apply_delta(state: DesignState, delta) -> DesignState:
    """Advance the state by a step in the full variable vector."""
    delta = np.asarray(delta, dtype=float)
    if delta.shape != (state.num_vars,):
        raise ValueError("delta has wrong length for this state")
    v = state.cascade.to_vector() + delta[:-1]
    cascade = SosCascade.from_vector(v, zeroed=state.cascade.zeroed)
    return DesignState(
        cascade=cascade,
        tau=state.tau + float(delta[-1]),
        iteration=state.iteration + 1,
    )


# ----------------------------------------------------------------------
# frequency response and group delay


def _as_omega(omega):
    arr = np.atleast_1d(np.asarray(omega, dtype=float))
    return arr, np.isscalar(omega) or np.ndim(omega) == 0


def _section_polys(cascade: SosCascade, z: np.ndarray):
    """Numerator and denominator values, shape (J, K)."""
    a0, a1, b0, b1 = cascade.coeff_arrays()
    zz = z * z
    num = a0[:, None] + a1[:, None] * z[None, :] + zz[None, :]
    den = b0[:, None] + b1[:, None] * z[None, :] + zz[None, :]
    return num, den


def response(cascade: SosCascade, omega):
    """Complex frequency response H(e^{j*omega})."""
    om, scalar = _as_omega(omega)
    z = np.exp(1j * om)
    if cascade.num_sections == 0:
        h = np.full(om.shape, cascade.h0, dtype=complex)
        return h[0] if scalar else h
    num, den = _section_polys(cascade, z)
    if om.size and np.min(np.abs(den)) < _TINY:
        raise PoleOnGrid("denominator vanishes at a grid frequency")
    h = cascade.h0 * np.prod(num / den, axis=0)
    return h[0] if scalar else h


def _delay_terms(coef0, coef1, cw):
    """alpha and beta of one polynomial c0 + c1*z + z**2 on the unit circle.

    beta equals |c0 + c1*e^{jw} + e^{2jw}|^2 and the phase derivative of the
    factor is alpha/beta.
    """
    alpha = 1.0 - coef0**2 + coef1 * (1.0 - coef0) * cw
    beta = (
        coef0**2
        + coef1**2
        + 1.0
        + 2.0 * coef0 * (2.0 * cw**2 - 1.0)
        + 2.0 * coef1 * (coef0 + 1.0) * cw
    )
    return alpha, beta


def group_delay(cascade: SosCascade, omega):
    """Group delay of the cascade in samples (gain-independent)."""
    om, scalar = _as_omega(omega)
    if cascade.num_sections == 0:
        g = np.zeros(om.shape)
        return g[0] if scalar else g
    a0, a1, b0, b1 = cascade.coeff_arrays()
    cw = np.cos(om)
    an, bn = _delay_terms(a0[:, None], a1[:, None], cw[None, :])
    ad, bd = _delay_terms(b0[:, None], b1[:, None], cw[None, :])
    if min(np.min(np.abs(bn)), np.min(np.abs(bd))) < _TINY:
        raise DegenerateSection("group delay undefined: a root sits on the unit circle at a grid frequency")
    tau = np.sum(-an / bn + ad / bd, axis=0)
    return tau[0] if scalar else tau


def response_gradient(cascade: SosCascade, omega):
    """Response and its Jacobian w.r.t. the coefficient vector.

    Returns ``(h, dh)`` with ``h`` of shape (K,) and ``dh`` of shape
    (K, 4*J + 1), both complex.  Columns follow to_vector() order.  The
    product over the other sections is formed from prefix/suffix partial
    products so a section numerator sitting on the unit circle does not
    poison its own derivative.
    """
    om, _ = _as_omega(omega)
    K = om.size
    J = cascade.num_sections
    z = np.exp(1j * om)
    dh = np.zeros((K, 4 * J + 1), dtype=complex)
    if J == 0:
        h = np.full(K, cascade.h0, dtype=complex)
        dh[:, -1] = 1.0
        return h, dh
    num, den = _section_polys(cascade, z)
    if K and np.min(np.abs(den)) < _TINY:
        raise PoleOnGrid("denominator vanishes at a grid frequency")
    ratio = num / den  # (J, K)
    # pre[m] = prod_{l<m} ratio_l, suf[m] = prod_{l>m} ratio_l
    pre = np.ones_like(ratio)
    suf = np.ones_like(ratio)
    np.cumprod(ratio[:-1], axis=0, out=pre[1:])
    np.cumprod(ratio[:0:-1], axis=0, out=suf[-2::-1])
    others = cascade.h0 * pre * suf  # H without section m's own ratio
    full = ratio[0] * suf[0]  # prod of all ratios
    h = cascade.h0 * full

    for m in range(J):
        p = others[m]
        dh[:, 4 * m] = p / den[m]
        dh[:, 4 * m + 1] = p * z / den[m]
        dh[:, 4 * m + 2] = -p * num[m] / den[m] ** 2
        dh[:, 4 * m + 3] = -p * num[m] * z / den[m] ** 2
    dh[:, -1] = full
    return h, dh


def delay_gradient(cascade: SosCascade, omega):
    """Group delay and its Jacobian w.r.t. the coefficient vector.

    Returns ``(tau_h, dtau)`` with ``dtau`` of shape (K, 4*J + 1).  The
    gain column is identically zero.
    """
    om, _ = _as_omega(omega)
    K = om.size
    J = cascade.num_sections
    dtau = np.zeros((K, 4 * J + 1))
    if J == 0:
        return np.zeros(K), dtau
    a0, a1, b0, b1 = cascade.coeff_arrays()
    cw = np.cos(om)[None, :]
    an, bn = _delay_terms(a0[:, None], a1[:, None], cw)
    ad, bd = _delay_terms(b0[:, None], b1[:, None], cw)
    if min(np.min(np.abs(bn)), np.min(np.abs(bd))) < _TINY:
        raise DegenerateSection("group delay undefined: a root sits on the unit circle at a grid frequency")
    tau = np.sum(-an / bn + ad / bd, axis=0)

    # quotient rule per section; numerator factors enter with -, denominator with +
    for m in range(J):
        da_n0 = -2.0 * a0[m] - a1[m] * cw[0]
        db_n0 = 2.0 * a0[m] + 2.0 * (2.0 * cw[0] ** 2 - 1.0) + 2.0 * a1[m] * cw[0]
        da_n1 = (1.0 - a0[m]) * cw[0]
        db_n1 = 2.0 * a1[m] + 2.0 * (a0[m] + 1.0) * cw[0]
        dtau[:, 4 * m] = -(da_n0 * bn[m] - an[m] * db_n0) / bn[m] ** 2
        dtau[:, 4 * m + 1] = -(da_n1 * bn[m] - an[m] * db_n1) / bn[m] ** 2

        da_d0 = -2.0 * b0[m] - b1[m] * cw[0]
        db_d0 = 2.0 * b0[m] + 2.0 * (2.0 * cw[0] ** 2 - 1.0) + 2.0 * b1[m] * cw[0]
        da_d1 = (1.0 - b0[m]) * cw[0]
        db_d1 = 2.0 * b1[m] + 2.0 * (b0[m] + 1.0) * cw[0]
        dtau[:, 4 * m + 2] = (da_d0 * bd[m] - ad[m] * db_d0) / bd[m] ** 2
        dtau[:, 4 * m + 3] = (da_d1 * bd[m] - ad[m] * db_d1) / bd[m] ** 2
    return tau, dtau


# ----------------------------------------------------------------------
# error functions over a sampling grid


@dataclass(frozen=True)
class ErrorTerms:
    """Linearization data of the design errors at one state.

    Gradients are taken w.r.t. the full variable vector x = [c, tau], so
    every Jacobian below has state.num_vars columns.  e_g rows carry -1 in
    the tau column; magnitude-type rows do not depend on tau.
    """

    pb_omega: np.ndarray
    e_g: np.ndarray          # group-delay error tau_h - tau
    grad_e_g: np.ndarray
    e_pb: np.ndarray         # squared-magnitude error |H|^2 - 1
    grad_e_pb: np.ndarray
    sb_omega: np.ndarray
    h_sb: np.ndarray         # complex response on the stopband grid
    grad_h_sb: np.ndarray
    tb_omega: np.ndarray
    h_tb: np.ndarray
    grad_h_tb: np.ndarray


def error_terms(state: DesignState, pb_omega, sb_omega, tb_omega) -> ErrorTerms:
    """Evaluate design errors and their x-gradients on the three grids."""
    cascade = state.cascade
    n = state.num_vars
    pb = np.asarray(pb_omega, dtype=float)
    sb = np.asarray(sb_omega, dtype=float)
    tb = np.asarray(tb_omega, dtype=float)

    tau_h, dtau = delay_gradient(cascade, pb)
    e_g = tau_h - state.tau
    grad_e_g = np.zeros((pb.size, n))
    grad_e_g[:, :-1] = dtau
    grad_e_g[:, -1] = -1.0

    h_pb, dh_pb = response_gradient(cascade, pb)
    e_pb = np.abs(h_pb) ** 2 - 1.0
    grad_e_pb = np.zeros((pb.size, n))
    grad_e_pb[:, :-1] = 2.0 * np.real(np.conj(h_pb)[:, None] * dh_pb)

    def _mag_rows(om):
        h, dh = response_gradient(cascade, om)
        g = np.zeros((om.size, n), dtype=complex)
        g[:, :-1] = dh
        return h, g

    h_sb, grad_h_sb = _mag_rows(sb)
    h_tb, grad_h_tb = _mag_rows(tb)
    return ErrorTerms(
        pb_omega=pb, e_g=e_g, grad_e_g=grad_e_g, e_pb=e_pb, grad_e_pb=grad_e_pb,
        sb_omega=sb, h_sb=h_sb, grad_h_sb=grad_h_sb,
        tb_omega=tb, h_tb=h_tb, grad_h_tb=grad_h_tb,
    )


# ----------------------------------------------------------------------
# stability


def stability_margins(cascade: SosCascade, gamma: float) -> np.ndarray:
    """Slack of each section in the shrunken stability triangle.

    Row m is (1-gamma-b0, 1-gamma-b1+b0, 1-gamma+b1+b0); all three positive
    means the section poles stay at radius <= 1 - eps with
    gamma = 1 - (1 - eps)**2.
    """
    _, _, b0, b1 = cascade.coeff_arrays()
    cap = 1.0 - gamma
    return np.column_stack([cap - b0, cap - b1 + b0, cap + b1 + b0])


def pole_radii(cascade: SosCascade) -> np.ndarray:
    """Radii of all section poles (2 per section, counting the origin)."""
    return np.abs(poles(cascade))


def max_pole_radius(cascade: SosCascade) -> float:
    r = pole_radii(cascade)
    return float(np.max(r)) if r.size else 0.0


def _quad_roots(c0, c1):
    """Roots of z**2 + c1*z + c0."""
    disc = complex(c1 * c1 - 4.0 * c0)
    sq = np.sqrt(disc)
    return np.array([(-c1 + sq) / 2.0, (-c1 - sq) / 2.0])


def poles(cascade: SosCascade) -> np.ndarray:
    _, _, b0, b1 = cascade.coeff_arrays()
    if cascade.num_sections == 0:
        return np.array([], dtype=complex)
    return np.concatenate([_quad_roots(b0[m], b1[m]) for m in range(cascade.num_sections)])


def zeros(cascade: SosCascade) -> np.ndarray:
    a0, a1, _, _ = cascade.coeff_arrays()
    if cascade.num_sections == 0:
        return np.array([], dtype=complex)
    return np.concatenate([_quad_roots(a0[m], a1[m]) for m in range(cascade.num_sections)])


def _pair_roots(roots, tol=1e-8):
    """Group roots into (sum, product) pairs for biquad coefficients.

    Complex roots must come in conjugate pairs.  Real roots are paired
    greedily in sorted order; a single leftover real root is returned
    separately.
    """
    roots = np.asarray(roots, dtype=complex)
    cplx = roots[np.abs(roots.imag) > tol]
    real = np.sort(roots[np.abs(roots.imag) <= tol].real)
    up = np.sort_complex(cplx[cplx.imag > 0])
    dn = np.sort_complex(np.conj(cplx[cplx.imag < 0]))
    if up.size != dn.size or (up.size and np.max(np.abs(up - dn)) > 1e-6 * (1 + np.max(np.abs(up)))):
        raise ValueError("complex roots do not form conjugate pairs")
    pairs = []
    for r in up:
        pairs.append((float(-2.0 * r.real), float(abs(r) ** 2)))  # (c1, c0)
    i = 0
    while i + 1 < real.size:
        r1, r2 = real[i], real[i + 1]
        pairs.append((float(-(r1 + r2)), float(r1 * r2)))
        i += 2
    leftover = float(real[-1]) if real.size % 2 else None
    return pairs, leftover


def cascade_from_zpk(z, p, k) -> SosCascade:
    """Build a cascade from zeros, poles and gain.

    Shorter root lists are padded with roots at the origin.  A negative
    gain is folded into its magnitude; magnitude response and group delay
    are unchanged.  If both lists leave one real root over, those two form
    a first-order (zeroed) section; a single-sided leftover is not
    representable and raises ValueError.
    """
    if k == 0:
        raise ValueError("gain must be nonzero")
    zp, zleft = _pair_roots(z)
    pp, pleft = _pair_roots(p)
    if (zleft is None) != (pleft is None):
        # pad the odd side with a root at the origin to even things out
        if zleft is None:
            zleft = 0.0
        else:
            pleft = 0.0
    nsec = max(len(zp), len(pp))
    zp = zp + [(0.0, 0.0)] * (nsec - len(zp))
    pp = pp + [(0.0, 0.0)] * (nsec - len(pp))
    sections = [Biquad(a0=c0, a1=c1, b0=d0, b1=d1) for (c1, c0), (d1, d0) in zip(zp, pp)]
    zeroed = [False] * nsec
    if zleft is not None:
        sections.append(Biquad(a0=0.0, a1=-zleft, b0=0.0, b1=-pleft))
        zeroed.append(True)
    return SosCascade(h0=abs(float(k)), sections=tuple(sections), zeroed=tuple(zeroed))


# ----------------------------------------------------------------------
# coefficient interchange format


def coefficients_to_text(cascade: SosCascade) -> str:
    """Serialize to the plain-text interchange format.

    First line is h0, then one "a0 a1 b0 b1" line per section, all printed
    with 17 significant digits so the round trip is bit-exact.
    """
    buf = io.StringIO()
    buf.write("%.17g\n" % cascade.h0)
    for s in cascade.sections:
        buf.write("%.17g %.17g %.17g %.17g\n" % (s.a0, s.a1, s.b0, s.b1))
    return buf.getvalue()


def coefficients_from_text(text: str) -> SosCascade:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValueError("empty coefficient text")
    h0 = float(lines[0])
    sections = []
    zeroed = []
    for ln in lines[1:]:
        vals = [float(tok) for tok in ln.split()]
        if len(vals) != 4:
            raise ValueError(f"expected 4 coefficients per line, got {len(vals)}")
        a0, a1, b0, b1 = vals
        sections.append(Biquad(a0, a1, b0, b1))
        zeroed.append(a0 == 0.0 and b0 == 0.0)
    return SosCascade(h0=h0, sections=tuple(sections), zeroed=tuple(zeroed))


def write_coefficients(cascade: SosCascade, path) -> None:
    with open(path, "w") as f:
        f.write(coefficients_to_text(cascade))


def read_coefficients(path) -> SosCascade:
    with open(path) as f:
        return coefficients_from_text(f.read())

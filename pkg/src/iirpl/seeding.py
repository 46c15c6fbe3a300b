"""Starting filters for the optimization.

Two families:

* optimized-delay runs start from a minimum-order elliptic filter meeting
  the magnitude spec, padded with allpass sections whose poles fan out
  across the passband; the allpasses add delay headroom without touching
  the magnitude.
* prescribed-delay runs start from a linear-phase FIR whose delay equals
  the target, reduced to the wanted IIR order by balanced model
  truncation of its delay-line state space.

scipy supplies the elliptic approximation and the FIR window design; the
balanced truncation is done directly since the FIR case collapses to an
eigendecomposition (the controllability Gramian of a delay line is the
identity).
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg
import scipy.signal

from . import sos
from .errors import IllConditioned, InfeasibleSpec

__all__ = [
    "design_elliptic",
    "augment_allpass",
    "start_delays",
    "design_fir_linear_phase",
    "bmt_reduce",
    "relocate_wide_zeros",
]

# sections beyond this are a sign the magnitude spec is out of reach
_MAX_ELLIPTIC_ORDER = 60


def design_elliptic(kind: str, pb_edges, sb_edges, ripple_db: float,
                    atten_db: float) -> sos.SosCascade:
    """Minimum even-order elliptic filter meeting the magnitude spec.

    kind is 'lowpass', 'highpass' or 'bandpass'; edges are in radians.
    The order is rounded up to even so the result is a clean biquad
    cascade.
    """
    if kind in ("lowpass", "highpass"):
        wp = np.atleast_1d(pb_edges).item() / np.pi
        ws = np.atleast_1d(sb_edges).item() / np.pi
    elif kind == "bandpass":
        wp = np.asarray(pb_edges, dtype=float) / np.pi
        ws = np.asarray(sb_edges, dtype=float) / np.pi
    else:
        raise ValueError(f"unknown filter kind {kind!r}")
    n, wn = scipy.signal.ellipord(wp, ws, ripple_db, atten_db)
    if kind in ("lowpass", "highpass") and n % 2:
        n += 1
    total = 2 * n if kind == "bandpass" else n
    if total > _MAX_ELLIPTIC_ORDER:
        raise InfeasibleSpec(f"magnitude spec needs elliptic order {total}")
    z, p, k = scipy.signal.ellip(n, ripple_db, atten_db, wn, btype=kind, output="zpk")
    return sos.cascade_from_zpk(z, p, k)


def augment_allpass(cascade: sos.SosCascade, pb_lo: float, pb_hi: float,
                    m_sections: int, pole_radius: float = 0.8) -> sos.SosCascade:
    """Append m allpass biquads with poles spread across the passband.

    Section k gets poles r*exp(+-j*theta_k) and zeros (1/r)*exp(+-j*theta_k)
    with theta_k at the midpoints of m equal passband subintervals.  The
    gain is then renormalized so the passband magnitude ripples about one.
    """
    r = pole_radius
    secs = list(cascade.sections)
    mask = list(cascade.zeroed)
    width = (pb_hi - pb_lo) / m_sections if m_sections else 0.0
    for k in range(m_sections):
        th = pb_lo + (k + 0.5) * width
        c = math.cos(th)
        secs.append(sos.Biquad(a0=1.0 / r**2, a1=-2.0 * c / r, b0=r**2, b1=-2.0 * r * c))
        mask.append(False)
    out = sos.SosCascade(h0=cascade.h0, sections=tuple(secs), zeroed=tuple(mask))
    from .metrics import renormalize_gain

    return renormalize_gain(out, np.linspace(pb_lo, pb_hi, 1024))


def start_delays(cascade: sos.SosCascade, pb_lo: float, pb_hi: float,
                 npoints: int = 1024):
    """(average, max, min) passband group delay of a starting filter.

    The average uses the trapezoid rule; all three are candidate initial
    values for the nominal delay.
    """
    w = np.linspace(pb_lo, pb_hi, npoints)
    gd = sos.group_delay(cascade, w)
    avg = float(np.trapezoid(gd, w) / (pb_hi - pb_lo))
    return avg, float(np.max(gd)), float(np.min(gd))


def design_fir_linear_phase(tau: float, kind: str, pb_edges, sb_edges) -> np.ndarray:
    """Hamming-window FIR with exact group delay ceil(tau).

    Length 2*ceil(tau) + 1 keeps the delay integer and the filter type I,
    cutoff midway through each transition band.
    """
    ntaps = 2 * math.ceil(tau) + 1
    if kind == "lowpass":
        cutoff = [(np.atleast_1d(pb_edges).item() + np.atleast_1d(sb_edges).item()) / 2.0]
        pass_zero = True
    elif kind == "highpass":
        cutoff = [(np.atleast_1d(pb_edges).item() + np.atleast_1d(sb_edges).item()) / 2.0]
        pass_zero = False
    elif kind == "bandpass":
        pb = np.asarray(pb_edges, dtype=float)
        sb = np.asarray(sb_edges, dtype=float)
        cutoff = [(sb[0] + pb[0]) / 2.0, (pb[1] + sb[1]) / 2.0]
        pass_zero = False
    else:
        raise ValueError(f"unknown filter kind {kind!r}")
    return scipy.signal.firwin(ntaps, cutoff, window="hamming", pass_zero=pass_zero, fs=2.0 * np.pi)


def bmt_reduce(taps, order: int):
    """Balanced truncation of an FIR to a low-order IIR; returns (z, p, k).

    The FIR is realized on its delay line, whose controllability Gramian
    is the identity, so balancing only needs the eigendecomposition of the
    observability Gramian (a Hankel product of the taps).  States with the
    smallest Hankel singular values are discarded.  Raises IllConditioned
    when the kept/leading singular-value spread exceeds 1e12, since the
    balancing transform is then untrustworthy.
    """
    taps = np.asarray(taps, dtype=float)
    L = taps.size
    if not 1 <= order < L:
        raise ValueError("reduced order must be positive and below the FIR order")
    d = taps[0]
    c = taps[1:]
    N = L - 1
    # observability Gramian Wo = H'H with H the tap Hankel matrix; taking the
    # SVD of H instead of eigh(Wo) keeps the small singular values honest
    H = np.zeros((N, N))
    for k in range(N):
        H[k, : N - k] = c[k:]
    _, sv, Vt = np.linalg.svd(H)
    Q = Vt.T
    if sv[order - 1] <= 0.0 or sv[0] / sv[order - 1] > 1e12:
        raise IllConditioned("Hankel singular values span more than 1e12")
    t_inv_scale = sv**0.5       # T = Q diag(sv^-1/2); T^-1 = diag(sv^1/2) Q'
    t_scale = sv**-0.5

    # A is the down-shift on the delay line, B = e1, C = taps[1:]
    A = np.zeros((N, N))
    A[np.arange(1, N), np.arange(N - 1)] = 1.0
    Ab = (t_inv_scale[:order, None] * Q[:, :order].T) @ A @ (Q[:, :order] * t_scale[None, :order])
    Bb = t_inv_scale[:order] * Q[0, :order]
    Cb = (c @ Q[:, :order]) * t_scale[:order]

    p = np.linalg.eigvals(Ab)
    if abs(d) > 1e-9 * np.max(np.abs(taps)):
        z = np.linalg.eigvals(Ab - np.outer(Bb, Cb) / d)
        k = d
    else:
        # Rosenbrock pencil keeps the zeros well-posed for tiny direct terms
        M = np.block([[Ab, Bb[:, None]], [Cb[None, :], np.array([[d]])]])
        E = np.eye(order + 1)
        E[-1, -1] = 0.0
        ev = scipy.linalg.eig(M, E, right=False)
        z = ev[np.isfinite(ev)]
        # match the state-space response at a probe point to recover the gain
        z0 = 2.37
        hval = d + Cb @ np.linalg.solve(z0 * np.eye(order) - Ab, Bb)
        k = float(np.real(hval * np.prod(z0 - p) / np.prod(z0 - z)))
    return z, p, k


def relocate_wide_zeros(z, max_radius: float = 2.5) -> np.ndarray:
    """Replace zeros far outside the unit circle with zeros at the origin.

    Distant zeros contribute almost nothing to the response shape but give
    the optimizer ill-scaled coefficients; parking them at the origin
    keeps the section count while the gain renormalization absorbs the
    level shift.
    """
    z = np.asarray(z, dtype=complex).copy()
    z[np.abs(z) > max_radius] = 0.0
    return z

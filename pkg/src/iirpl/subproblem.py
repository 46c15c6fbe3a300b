"""Linearized subproblem assembly.

At a design iterate x = [c, tau] the nonlinear errors are replaced by
first-order models in the step delta, and the step is found from

    minimize  || C delta + d ||_inf  +  W * d_rlx
    s.t.      || Dpb delta + fpb ||_inf <= cap_pb + d_rlx      (passband magnitude)
              | Dsb_i delta + fsb_i |   <= cap_sb              (stopband, complex)
              | Dtb_i delta + ftb_i |   <= cap_tb              (transition, optional)
              || delta ||_2            <= cap_step + d_rlx     (trust region)
              B delta                  <= b_margins            (stability triangle)
              d_rlx >= 0

where C delta + d models the group-delay error.  The slack d_rlx keeps the
subproblem feasible when the starting filter violates the passband spec;
its heavy weight W drives it to zero as soon as feasibility is reachable.
Each complex magnitude row becomes a small second-order cone over its real
and imaginary parts; the infinity norms flatten into pairs of linear rows
against an epigraph variable t.  Variable layout of the lowered program:
u = [delta (n), d_rlx, t].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import sos
from .errors import DimensionMismatch, InfeasibleStart
from .socp import ConeProgram, SocBlock

__all__ = ["LinearizedSystem", "Caps", "assemble", "lower"]


@dataclass(frozen=True)
class LinearizedSystem:
    """First-order models of all design errors at one iterate."""

    delay_rows: np.ndarray    # C, (Np, n)
    delay_vals: np.ndarray    # d, (Np,)
    pb_rows: np.ndarray       # (Np, n)
    pb_vals: np.ndarray
    sb_rows: np.ndarray       # complex, (Ns, n)
    sb_vals: np.ndarray
    tb_rows: np.ndarray       # complex, (Nt, n)
    tb_vals: np.ndarray
    stab_rows: np.ndarray     # (3J, n)
    stab_vals: np.ndarray
    n_vars: int

    def validate(self) -> None:
        n = self.n_vars
        pairs = [
            (self.delay_rows, self.delay_vals), (self.pb_rows, self.pb_vals),
            (self.sb_rows, self.sb_vals), (self.tb_rows, self.tb_vals),
            (self.stab_rows, self.stab_vals),
        ]
        for rows, vals in pairs:
            if rows.ndim != 2 or rows.shape[1] != n:
                raise DimensionMismatch("row block width does not match variable count")
            if vals.shape != (rows.shape[0],):
                raise DimensionMismatch("row block and value lengths differ")


@dataclass(frozen=True)
class Caps:
    """Constraint caps of one subproblem (linear-amplitude units)."""

    pb: float            # passband |H|^2 deviation cap
    sb: float            # stopband magnitude cap
    tb: float | None     # transition magnitude cap, None leaves it unconstrained
    step: float = 0.01   # trust-region radius
    w_relax: float = 1000.0

    def __post_init__(self):
        if not (500.0 <= self.w_relax <= 5000.0):
            warnings.warn(
                f"relaxation weight {self.w_relax:g} is outside the usual 500..5000 range",
                stacklevel=3,
            )


def assemble(state: sos.DesignState, grid, eps_stab: float) -> LinearizedSystem:
    """Linearize the design errors at `state` over the grid's actual points.

    eps_stab is the pole-radius margin: poles are confined to radius
    <= 1 - eps_stab through a shrunken coefficient triangle per section.
    Raises InfeasibleStart if the state is not inside that triangle,
    since the step constraints could then never be satisfied.  Sitting
    exactly on the shrunken boundary is fine (the pole radius is still
    1 - eps_stab); only violations beyond solver roundoff reject.
    """
    cascade = state.cascade
    gamma = 1.0 - (1.0 - eps_stab) ** 2
    margins = sos.stability_margins(cascade, gamma)
    if margins.size and np.min(margins) < -1e-7:
        raise InfeasibleStart(
            f"iterate sits outside the stability triangle (worst margin {np.min(margins):.3e})"
        )
    margins = np.maximum(margins, 0.0)

    terms = sos.error_terms(state, grid.passband, grid.stopband, grid.transition)
    n = state.num_vars
    J = cascade.num_sections

    stab_rows = np.zeros((3 * J, n))
    for m in range(J):
        cb0, cb1 = 4 * m + 2, 4 * m + 3
        stab_rows[3 * m, cb0] = 1.0
        stab_rows[3 * m + 1, cb0] = -1.0
        stab_rows[3 * m + 1, cb1] = 1.0
        stab_rows[3 * m + 2, cb0] = -1.0
        stab_rows[3 * m + 2, cb1] = -1.0

    sys = LinearizedSystem(
        delay_rows=terms.grad_e_g, delay_vals=terms.e_g,
        pb_rows=terms.grad_e_pb, pb_vals=terms.e_pb,
        sb_rows=terms.grad_h_sb, sb_vals=terms.h_sb,
        tb_rows=terms.grad_h_tb, tb_vals=terms.h_tb,
        stab_rows=stab_rows, stab_vals=margins.ravel(),
        n_vars=n,
    )
    sys.validate()
    return sys


def lower(sys: LinearizedSystem, caps: Caps, fixed_tau: bool = False,
          pinned_coeffs=()) -> ConeProgram:
    """Lower the linearized system to a cone program over [delta, d_rlx, t].

    fixed_tau pins the delay coordinate so prescribed-delay designs leave
    tau untouched; pinned_coeffs lists coefficient indices held at zero
    (first-order sections).
    """
    sys.validate()
    n = sys.n_vars
    npb = sys.delay_rows.shape[0]
    if npb == 0:
        raise DimensionMismatch("subproblem needs at least one passband row")
    nv = n + 2
    i_rlx, i_t = n, n + 1

    q = np.zeros(nv)
    q[i_rlx] = caps.w_relax
    q[i_t] = 1.0

    rows = []
    rhs = []

    def add(coeff_delta, c_rlx, c_t, b):
        r = np.zeros(nv)
        r[:n] = coeff_delta
        r[i_rlx] = c_rlx
        r[i_t] = c_t
        rows.append(r)
        rhs.append(b)

    for i in range(npb):
        add(sys.delay_rows[i], 0.0, -1.0, -sys.delay_vals[i])
        add(-sys.delay_rows[i], 0.0, -1.0, sys.delay_vals[i])
    for i in range(sys.pb_rows.shape[0]):
        add(sys.pb_rows[i], -1.0, 0.0, caps.pb - sys.pb_vals[i])
        add(-sys.pb_rows[i], -1.0, 0.0, caps.pb + sys.pb_vals[i])
    add(np.zeros(n), -1.0, 0.0, 0.0)  # d_rlx >= 0
    for i in range(sys.stab_rows.shape[0]):
        add(sys.stab_rows[i], 0.0, 0.0, sys.stab_vals[i])

    socs = []

    def mag_block(row, val, cap):
        A = np.zeros((2, nv))
        A[0, :n] = row.real
        A[1, :n] = row.imag
        return SocBlock(A=A, b=np.array([val.real, val.imag]), c=np.zeros(nv), d=cap)

    for i in range(sys.sb_rows.shape[0]):
        socs.append(mag_block(sys.sb_rows[i], sys.sb_vals[i], caps.sb))
    if caps.tb is not None:
        for i in range(sys.tb_rows.shape[0]):
            socs.append(mag_block(sys.tb_rows[i], sys.tb_vals[i], caps.tb))

    A_tr = np.zeros((n, nv))
    A_tr[:, :n] = np.eye(n)
    c_tr = np.zeros(nv)
    c_tr[i_rlx] = 1.0
    socs.append(SocBlock(A=A_tr, b=np.zeros(n), c=c_tr, d=caps.step))

    pinned = sorted(set(pinned_coeffs) | ({n - 1} if fixed_tau else set()))
    return ConeProgram(
        q=q,
        G_lin=np.array(rows),
        h_lin=np.array(rhs),
        socs=tuple(socs),
        pinned=tuple(pinned),
    )

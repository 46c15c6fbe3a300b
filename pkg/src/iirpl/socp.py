"""Embedded second-order cone solver.

Solves

    minimize    q'u
    subject to  G_lin u <= h_lin
                || A_i u + b_i ||_2 <= c_i'u + d_i      for each SOC block

via a homogeneous self-dual embedding with Nesterov-Todd scaling and a
Mehrotra predictor-corrector step.  Problems of the size produced by the
design loop (tens of variables, a few hundred rows) factor in microseconds
with dense Cholesky, so everything below is plain numpy/scipy.

The homogeneous embedding tracks (x, s, z, tau, kappa); tau > 0 at the end
recovers the solution as x/tau, while a vanishing tau exposes a primal or
dual infeasibility certificate instead of stalling.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .errors import DimensionMismatch, NumericalBreakdown

__all__ = ["SocBlock", "ConeProgram", "Solution", "solve", "program_to_text", "program_from_text"]

_BIG = 1e18


@dataclass(frozen=True)
class SocBlock:
    """One constraint ||A u + b|| <= c'u + d."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: float


@dataclass(frozen=True)
class ConeProgram:
    """Input to :func:`solve`; see the module docstring for the geometry.

    ``pinned`` lists variable indices fixed at zero; they are removed
    before the interior-point iteration and reinstated in the solution.
    """

    q: np.ndarray
    G_lin: np.ndarray
    h_lin: np.ndarray
    socs: tuple[SocBlock, ...] = ()
    pinned: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.q.size

    def validate(self) -> None:
        n = self.n
        if self.G_lin.ndim != 2 or self.G_lin.shape[1] != n:
            raise DimensionMismatch("G_lin column count does not match objective length")
        if self.h_lin.shape != (self.G_lin.shape[0],):
            raise DimensionMismatch("h_lin length does not match G_lin rows")
        for blk in self.socs:
            if blk.A.ndim != 2 or blk.A.shape[1] != n or blk.c.shape != (n,):
                raise DimensionMismatch("SOC block shape does not match variable count")
            if blk.b.shape != (blk.A.shape[0],):
                raise DimensionMismatch("SOC offset length does not match its matrix")
        if any(not (0 <= i < n) for i in self.pinned):
            raise DimensionMismatch("pinned index out of range")


@dataclass
class Solution:
    u: np.ndarray
    status: str  # optimal | near_optimal | infeasible | unbounded | max_iters
    primal_obj: float
    dual_obj: float
    residuals: dict
    iterations: int


# ----------------------------------------------------------------------
# cone arithmetic over concatenated (lp, soc...) vectors


class _Cones:
    def __init__(self, lp: int, soc_dims):
        self.lp = lp
        self.soc = list(soc_dims)
        self.dim = lp + sum(self.soc)
        self.nu = lp + len(self.soc)  # barrier degree
        off = [lp]
        for d in self.soc:
            off.append(off[-1] + d)
        self.off = off

    def soc_views(self, x):
        return [x[self.off[i] : self.off[i + 1]] for i in range(len(self.soc))]

    def e(self):
        v = np.zeros(self.dim)
        v[: self.lp] = 1.0
        for blk in self.soc_views(v):
            blk[0] = 1.0
        return v

    def margin(self, x) -> float:
        """Distance to the cone boundary; positive means strictly inside."""
        m = np.inf
        if self.lp:
            m = min(m, float(np.min(x[: self.lp])))
        for blk in self.soc_views(x):
            m = min(m, float(blk[0] - np.linalg.norm(blk[1:])))
        return m

    def circ(self, x, y):
        out = np.empty(self.dim)
        out[: self.lp] = x[: self.lp] * y[: self.lp]
        for xb, yb, ob in zip(self.soc_views(x), self.soc_views(y), self.soc_views(out)):
            ob[0] = xb @ yb
            ob[1:] = xb[0] * yb[1:] + yb[0] * xb[1:]
        return out

    def jdiv(self, lam, v):
        """Solve lam o u = v for u."""
        out = np.empty(self.dim)
        out[: self.lp] = v[: self.lp] / lam[: self.lp]
        for lb, vb, ob in zip(self.soc_views(lam), self.soc_views(v), self.soc_views(out)):
            l0, l1 = lb[0], lb[1:]
            det = l0 * l0 - l1 @ l1
            ob[0] = (l0 * vb[0] - l1 @ vb[1:]) / det
            ob[1:] = (vb[1:] - ob[0] * l1) / l0
        return out

    def max_step(self, x, dx) -> float:
        """Largest alpha with x + alpha*dx still in the cone."""
        alpha = _BIG
        if self.lp:
            neg = dx[: self.lp] < 0
            if np.any(neg):
                alpha = min(alpha, float(np.min(-x[: self.lp][neg] / dx[: self.lp][neg])))
        for xb, db in zip(self.soc_views(x), self.soc_views(dx)):
            a = db[0] ** 2 - db[1:] @ db[1:]
            b = 2.0 * (xb[0] * db[0] - xb[1:] @ db[1:])
            c = xb[0] ** 2 - xb[1:] @ xb[1:]
            roots = []
            if abs(a) < 1e-300:
                if b < 0:
                    roots.append(-c / b)
            else:
                disc = b * b - 4.0 * a * c
                if disc >= 0.0:
                    sq = np.sqrt(disc)
                    qq = -(b + np.copysign(sq, b)) / 2.0
                    for r in (qq / a, c / qq if qq != 0 else np.inf):
                        if np.isfinite(r):
                            roots.append(r)
            pos = [r for r in roots if r > 0.0]
            if pos:
                alpha = min(alpha, min(pos))
        return alpha


class _Scaling:
    """Nesterov-Todd scaling W with W z = W^{-1} s = lambda."""

    def __init__(self, cones: _Cones, s, z):
        self.cones = cones
        lp = cones.lp
        self.w = np.sqrt(s[:lp] / z[:lp]) if lp else np.zeros(0)
        if lp and not np.all(np.isfinite(self.w) & (self.w > 0.0)):
            raise NumericalBreakdown("scaling point left the nonnegative cone")
        self.soc = []
        for sb, zb in zip(cones.soc_views(s), cones.soc_views(z)):
            sarg = sb[0] ** 2 - sb[1:] @ sb[1:]
            zarg = zb[0] ** 2 - zb[1:] @ zb[1:]
            if not (sarg > 0.0 and zarg > 0.0 and np.isfinite(sarg) and np.isfinite(zarg)):
                raise NumericalBreakdown("scaling point left the second-order cone")
            sres = np.sqrt(sarg)
            zres = np.sqrt(zarg)
            sbar, zbar = sb / sres, zb / zres
            garg = (1.0 + sbar @ zbar) / 2.0
            if not (garg > 0.0 and np.isfinite(garg)):
                raise NumericalBreakdown("scaling point left the second-order cone")
            gam = np.sqrt(garg)
            wbar = np.empty_like(sb)
            wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gam)
            wbar[1:] = (sbar[1:] - zbar[1:]) / (2.0 * gam)
            # hyperbolic Householder vector: W = eta (2 v v' - J) needs the
            # "half-angle" point v = (wbar + e)/sqrt(2 (wbar0 + 1)), not wbar
            v = wbar
            v[0] += 1.0
            v /= np.sqrt(2.0 * v[0])
            eta = np.sqrt(sres / zres)
            self.soc.append((eta, v))
        self.lam = self.mul_w(z)

    def mul_w(self, x):
        cones = self.cones
        out = np.empty(cones.dim)
        out[: cones.lp] = self.w * x[: cones.lp]
        for (eta, wbar), xb, ob in zip(self.soc, cones.soc_views(x), cones.soc_views(out)):
            # W = eta (2 wbar wbar' - J)
            wx = wbar @ xb
            ob[0] = eta * (2.0 * wbar[0] * wx - xb[0])
            ob[1:] = eta * (2.0 * wbar[1:] * wx + xb[1:])
        return out

    def mul_winv(self, x):
        cones = self.cones
        out = np.empty(cones.dim)
        out[: cones.lp] = x[: cones.lp] / self.w
        for (eta, wbar), xb, ob in zip(self.soc, cones.soc_views(x), cones.soc_views(out)):
            # W^{-1} = (1/eta) (2 J wbar wbar' J - J), with v = J wbar
            v0, v1 = wbar[0], -wbar[1:]
            vx = v0 * xb[0] + v1 @ xb[1:]
            ob[0] = (2.0 * v0 * vx - xb[0]) / eta
            ob[1:] = (2.0 * v1 * vx + xb[1:]) / eta
        return out

    def scale_rows(self, G):
        """Return W^{-1} G, applied blockwise to the rows."""
        cones = self.cones
        out = np.empty_like(G)
        lp = cones.lp
        out[:lp] = G[:lp] / self.w[:, None]
        for (eta, wbar), lo, hi in zip(self.soc, cones.off[:-1], cones.off[1:]):
            blk = G[lo:hi]
            v = np.concatenate([[wbar[0]], -wbar[1:]])
            vg = v @ blk
            jg = np.vstack([blk[0], -blk[1:]])
            out[lo:hi] = (2.0 * np.outer(v, vg) - jg) / eta
        return out


# ----------------------------------------------------------------------
# standard-form assembly and presolve


def standard_form(prog: ConeProgram):
    """Flatten a ConeProgram to (q, G, h, cones) with s = h - G u in K."""
    prog.validate()
    rows = [prog.G_lin]
    rhs = [prog.h_lin]
    dims = []
    for blk in prog.socs:
        rows.append(-blk.c[None, :])
        rows.append(-blk.A)
        rhs.append(np.array([blk.d]))
        rhs.append(blk.b)
        dims.append(blk.A.shape[0] + 1)
    G = np.vstack(rows) if rows else np.zeros((0, prog.n))
    h = np.concatenate(rhs) if rhs else np.zeros(0)
    return prog.q.copy(), G, h, _Cones(prog.G_lin.shape[0], dims)


def _equilibrate(G, cones: _Cones, sweeps: int = 4):
    """Ruiz row/column scales for G; SOC rows share one scale per block.

    Inequality rows may be rescaled individually, but every row of a
    second-order block must carry the same positive factor or the block
    stops being that cone.  Returns (row_scale, col_scale) with
    G_scaled = row_scale[:, None] * G * col_scale[None, :].
    """
    m, n = G.shape
    row = np.ones(m)
    col = np.ones(n)
    if m == 0 or n == 0:
        return row, col
    for _ in range(sweeps):
        A = np.abs(G) * row[:, None] * col[None, :]
        rn = A.max(axis=1)
        for lo, hi in zip(cones.off[:-1], cones.off[1:]):
            rn[lo:hi] = rn[lo:hi].max()
        rn[rn == 0.0] = 1.0
        row /= np.sqrt(rn)
        A = np.abs(G) * row[:, None] * col[None, :]
        cn = A.max(axis=0)
        cn[cn == 0.0] = 1.0
        col /= np.sqrt(cn)
    return row, col


class _Factor:
    """Cholesky of G' W^{-2} G with escalating static regularization."""

    def __init__(self, Gs):
        self.M = Gs.T @ Gs
        if not np.all(np.isfinite(self.M)):
            raise NumericalBreakdown("scaled normal equations are not finite")
        base = 1e-13 * (1.0 + float(np.max(np.diag(self.M))) if self.M.size else 1.0)
        reg = base
        last = None
        for _ in range(6):
            try:
                self.cf = cho_factor(self.M + reg * np.eye(self.M.shape[0]), lower=True)
                return
            except (LinAlgError, ValueError) as exc:
                last = exc
                reg *= 100.0
        raise NumericalBreakdown("normal equations lost positive definiteness") from last

    def solve(self, rhs):
        x = cho_solve(self.cf, rhs)
        # one round of iterative refinement against the unregularized matrix
        x += cho_solve(self.cf, rhs - self.M @ x)
        return x


def solve(prog: ConeProgram, tol: float = 1e-8, max_iters: int = 200,
          verbose: bool = False) -> Solution:
    """Solve the cone program; see Solution.status for the outcome."""
    q_full, G_full, h_orig, cones = standard_form(prog)
    n_full = q_full.size
    keep = np.array([i for i in range(n_full) if i not in set(prog.pinned)], dtype=int)
    q_orig = q_full[keep]
    G_orig = G_full[:, keep]
    n = keep.size

    def inflate(u_red):
        u = np.zeros(n_full)
        u[keep] = u_red
        return u

    if n == 0 or G_orig.shape[0] == 0:
        # nothing to optimize or nothing to constrain
        if G_orig.shape[0] == 0 and np.any(q_orig != 0.0):
            return Solution(inflate(np.zeros(n)), "unbounded", -np.inf, -np.inf, {}, 0)
        feas = cones.margin(h_orig) >= 0 if G_orig.shape[0] else True
        status = "optimal" if feas else "infeasible"
        return Solution(inflate(np.zeros(n)), status, 0.0, 0.0,
                        {"primal": 0.0, "dual": 0.0, "relgap": 0.0}, 0)

    # --- equilibrate: raw subproblems mix O(1) trust-region rows with
    # delay-gradient rows in the hundreds, which wrecks the normal equations
    rsc, csc = _equilibrate(G_orig, cones)
    G = G_orig * rsc[:, None] * csc[None, :]
    h = h_orig * rsc
    cost = 1.0 / max(1.0, float(np.max(np.abs(q_orig * csc))))
    q = q_orig * csc * cost

    # --- cold start: least-squares point pushed into the cone interior
    fac0 = _Factor(G)
    x = fac0.solve(G.T @ h)
    s = h - G @ x
    m = cones.margin(s)
    if m <= 0.0:
        s = s + (1.0 - m) * cones.e()
    z = -G @ fac0.solve(q)
    m = cones.margin(z)
    if m <= 0.0:
        z = z + (1.0 - m) * cones.e()
    tau, kappa = 1.0, 1.0

    nh = 1.0 + np.linalg.norm(h_orig)
    nq = 1.0 + np.linalg.norm(q_orig)
    iters = 0
    certificate = None
    best = None  # (worst_metric, x, s, z, tau, iteration)
    _STALL = 10

    if verbose:
        print(" it        mu      pres      dres    relgap    step")

    for iters in range(1, max_iters + 1):
        mu = (s @ z + tau * kappa) / (cones.nu + 1)

        # residuals are judged on the caller's data, not the scaled copy
        u_red = csc * (x / tau)
        s_o = (s / tau) / rsc
        z_o = (z / tau) * rsc / cost
        pres = np.linalg.norm(G_orig @ u_red + s_o - h_orig) / nh
        dres = np.linalg.norm(G_orig.T @ z_o + q_orig) / nq
        pobj = float(q_orig @ u_red)
        dobj = float(-h_orig @ z_o)
        gap = float(s_o @ z_o)
        relgap = gap / max(1.0, 0.5 * (abs(pobj) + abs(dobj)))
        worst = max(pres, dres, relgap)

        if verbose:
            print(f"{iters:3d}  {mu:9.2e} {pres:9.2e} {dres:9.2e} {relgap:9.2e}")

        if np.isfinite(worst) and (best is None or worst < best[0]):
            best = (worst, x.copy(), s.copy(), z.copy(), tau, iters)

        if worst <= tol:
            break

        # infeasibility certificates from the homogeneous embedding
        z_ray = z * rsc
        hz = h_orig @ z_ray
        x_ray = csc * x
        qx = q_orig @ x_ray
        if hz < 0.0 and np.linalg.norm(G_orig.T @ z_ray) / (-hz) <= tol * nq:
            certificate = "infeasible"
            break
        if qx < 0.0 and np.linalg.norm(G_orig @ x_ray + s / rsc) / (-qx) <= tol * nh:
            certificate = "unbounded"
            break

        # converged-as-far-as-roundoff-allows: residuals stop improving
        if mu < 1e-300 or iters - best[5] >= _STALL:
            break

        r_p = G @ x + s - h * tau
        r_d = G.T @ z + q * tau
        r_g = q @ x + h @ z + kappa

        try:
            sc = _Scaling(cones, s, z)
            Gs = sc.scale_rows(G)
            fac = _Factor(Gs)

            hs = sc.mul_winv(h)
            Gh_u2_rhs = Gs.T @ hs - q

            def direction(bp, bd, bg, bs, bk):
                dtil = cones.jdiv(sc.lam, bs)
                rbar = sc.mul_w(dtil) - bp
                rbar_s = sc.mul_winv(rbar)
                u1 = fac.solve(bd - Gs.T @ rbar_s)
                u2 = fac.solve(Gh_u2_rhs)
                gu1 = Gs @ u1
                gu2 = Gs @ u2
                denom = q @ u2 + hs @ gu2 - hs @ hs - kappa / tau
                if denom == 0.0:
                    raise NumericalBreakdown("singular homogeneous system")
                dtau = (bg - q @ u1 - hs @ (gu1 + rbar_s) - bk / tau) / denom
                du = u1 + dtau * u2
                dz = sc.mul_winv(Gs @ du - hs * dtau + rbar_s)
                ds = bp - G @ du + h * dtau
                dkappa = (bk - kappa * dtau) / tau
                return du, ds, dz, dtau, dkappa

            lamlam = cones.circ(sc.lam, sc.lam)

            # predictor
            du_a, ds_a, dz_a, dtau_a, dkappa_a = direction(
                -r_p, -r_d, -r_g, -lamlam, -tau * kappa)
            alpha = min(
                cones.max_step(s, ds_a),
                cones.max_step(z, dz_a),
                -tau / dtau_a if dtau_a < 0 else _BIG,
                -kappa / dkappa_a if dkappa_a < 0 else _BIG,
            )
            alpha_aff = min(1.0, alpha)
            sigma = (1.0 - alpha_aff) ** 3

            # corrector
            corr = cones.circ(sc.mul_winv(ds_a), sc.mul_w(dz_a))
            bs = -lamlam - corr + sigma * mu * cones.e()
            bk = -tau * kappa - dtau_a * dkappa_a + sigma * mu
            f = 1.0 - sigma
            du, ds, dz, dtau, dkappa = direction(-f * r_p, -f * r_d, -f * r_g, bs, bk)

            alpha = min(
                cones.max_step(s, ds),
                cones.max_step(z, dz),
                -tau / dtau if dtau < 0 else _BIG,
                -kappa / dkappa if dkappa < 0 else _BIG,
            )
        except NumericalBreakdown:
            # the current point is too close to the boundary to scale;
            # fall back to the best iterate seen so far
            break
        step = min(1.0, 0.99 * alpha)
        if not np.isfinite(step) or step <= 0.0:
            break
        x += step * du
        s += step * ds
        z += step * dz
        tau += step * dtau
        kappa += step * dkappa
        if verbose:
            print(f"{'':42s} {step:7.4f}")

    if certificate is not None:
        obj = np.nan if certificate == "infeasible" else -np.inf
        return Solution(inflate(np.zeros(n)), certificate, obj, obj,
                        {"primal": float(pres), "dual": float(dres),
                         "relgap": float(relgap)}, iters)

    # report the best iterate, with residuals recomputed on the raw data
    _, x, s, z, tau, _ = best
    u_red = csc * (x / tau)
    s_orig = (s / tau) / rsc
    z_orig = (z / tau) * rsc / cost
    pres = float(np.linalg.norm(G_orig @ u_red + s_orig - h_orig) / (1.0 + np.linalg.norm(h_orig)))
    dres = float(np.linalg.norm(G_orig.T @ z_orig + q_orig) / (1.0 + np.linalg.norm(q_orig)))
    pobj = float(q_orig @ u_red)
    dobj = float(-h_orig @ z_orig)
    gap = float(s_orig @ z_orig)
    relgap = float(gap / max(1.0, 0.5 * (abs(pobj) + abs(dobj))))
    worst = max(pres, dres, relgap)
    if worst <= tol:
        status = "optimal"
    elif worst <= 1e-4:
        status = "near_optimal"
    else:
        status = "max_iters"

    return Solution(
        u=inflate(u_red),
        status=status,
        primal_obj=pobj,
        dual_obj=dobj,
        residuals={"primal": pres, "dual": dres, "relgap": relgap},
        iterations=iters,
    )


# ----------------------------------------------------------------------
# text dump, for poking at a single subproblem in isolation


def _fmt_row(coeffs, rhs) -> str:
    return " ".join("%.17g" % v for v in coeffs) + " | " + "%.17g" % rhs


def program_to_text(prog: ConeProgram) -> str:
    buf = io.StringIO()
    buf.write("coneprogram\n")
    buf.write("n %d\n" % prog.n)
    buf.write("pinned %s\n" % " ".join(str(i) for i in prog.pinned))
    buf.write("q %s\n" % " ".join("%.17g" % v for v in prog.q))
    buf.write("lin %d\n" % prog.G_lin.shape[0])
    for row, rhs in zip(prog.G_lin, prog.h_lin):
        buf.write(_fmt_row(row, rhs) + "\n")
    for blk in prog.socs:
        buf.write("soc %d\n" % blk.A.shape[0])
        buf.write("cap " + _fmt_row(blk.c, blk.d) + "\n")
        for row, rhs in zip(blk.A, blk.b):
            buf.write(_fmt_row(row, rhs) + "\n")
    return buf.getvalue()


def _parse_row(line, n):
    left, right = line.split("|")
    coeffs = np.array([float(t) for t in left.split()])
    if coeffs.size != n:
        raise ValueError("row width does not match variable count")
    return coeffs, float(right)


def program_from_text(text: str) -> ConeProgram:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != "coneprogram":
        raise ValueError("not a cone program dump")
    i = 1
    n = int(lines[i].split()[1]); i += 1
    pinned = tuple(int(t) for t in lines[i].split()[1:]); i += 1
    q = np.array([float(t) for t in lines[i].split()[1:]]); i += 1
    m = int(lines[i].split()[1]); i += 1
    G_lin = np.zeros((m, n))
    h_lin = np.zeros(m)
    for r in range(m):
        G_lin[r], h_lin[r] = _parse_row(lines[i], n); i += 1
    socs = []
    while i < len(lines):
        if not lines[i].startswith("soc "):
            raise ValueError(f"unexpected line in dump: {lines[i]!r}")
        p = int(lines[i].split()[1]); i += 1
        cap = lines[i]
        if not cap.startswith("cap "):
            raise ValueError("soc block missing its cap row")
        c, d = _parse_row(cap[4:], n); i += 1
        A = np.zeros((p, n))
        b = np.zeros(p)
        for r in range(p):
            A[r], b[r] = _parse_row(lines[i], n); i += 1
        socs.append(SocBlock(A=A, b=b, c=c, d=d))
    return ConeProgram(q=q, G_lin=G_lin, h_lin=h_lin, socs=tuple(socs), pinned=pinned)

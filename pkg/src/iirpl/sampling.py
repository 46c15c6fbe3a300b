"""Nonuniform frequency sampling of the design bands.

Each band keeps a dense uniform "virtual" grid and a much smaller set of
"actual" sample frequencies where constraints are imposed.  After every
iterate the actual set is rebuilt against the current error envelope:
local maxima of the envelope are promoted first (largest first, ties to
the lower frequency), and the remaining budget is spread by equal-mass
quantiles of the envelope with a floor so quiet regions keep coverage.
Band edges that touch a transition band additionally carry a small fixed
cluster of closely spaced points ending exactly at the edge, which stops
the error from creeping up between samples right at the edge.

Selection depends only on the band layout and the supplied filter state,
so a refresh is deterministic and idempotent.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

import numpy as np

from . import sos
from .errors import BandTooNarrow

__all__ = [
    "BandSpec",
    "FrequencyGrid",
    "passband",
    "stopband",
    "transition",
    "build_grid",
    "refresh_grid",
    "verification_grid",
    "grid_to_csv",
]

# dedupe tolerance when a fixed point collides with a virtual point
_COINCIDE = 1e-12


@dataclass(frozen=True)
class BandSpec:
    """One frequency band [lo, hi] (rad) and its sampling budget."""

    kind: str  # 'passband' | 'stopband' | 'transition'
    lo: float
    hi: float
    virtual_count: int
    actual_count: int
    fixed_edge_count: int = 0
    fixed_edge_spacing: float = 0.0

    def __post_init__(self):
        if self.kind not in ("passband", "stopband", "transition"):
            raise ValueError(f"unknown band kind {self.kind!r}")
        if not (0.0 <= self.lo < self.hi <= np.pi + 1e-12):
            raise ValueError("band edges must satisfy 0 <= lo < hi <= pi")
        if self.virtual_count < self.actual_count:
            raise ValueError("virtual grid must be at least as dense as the actual grid")

    def virtual(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.virtual_count)


def passband(lo, hi, virtual_count=2000, actual_count=68,
             fixed_edge_count=6, fixed_edge_spacing=7.8e-4) -> BandSpec:
    return BandSpec("passband", float(lo), float(hi), virtual_count,
                    actual_count, fixed_edge_count, fixed_edge_spacing)


def stopband(lo, hi, virtual_count=2000, actual_count=68,
             fixed_edge_count=6, fixed_edge_spacing=7.8e-4) -> BandSpec:
    return BandSpec("stopband", float(lo), float(hi), virtual_count,
                    actual_count, fixed_edge_count, fixed_edge_spacing)


def transition(lo, hi, virtual_count=500, actual_count=18) -> BandSpec:
    return BandSpec("transition", float(lo), float(hi), virtual_count, actual_count)


@dataclass(frozen=True)
class FrequencyGrid:
    """Actual sample frequencies per band, plus the band layout itself."""

    bands: tuple[BandSpec, ...]
    points: tuple[np.ndarray, ...]

    def __post_init__(self):
        for arr in self.points:
            arr.setflags(write=False)

    def _concat(self, kind):
        arrs = [p for b, p in zip(self.bands, self.points) if b.kind == kind]
        return np.concatenate(arrs) if arrs else np.array([])

    @property
    def passband(self) -> np.ndarray:
        return self._concat("passband")

    @property
    def stopband(self) -> np.ndarray:
        return self._concat("stopband")

    @property
    def transition(self) -> np.ndarray:
        return self._concat("transition")


def _fixed_cluster(band: BandSpec, all_bands) -> np.ndarray:
    """Fixed points near this band's edges that touch a transition band."""
    if band.kind == "transition" or band.fixed_edge_count <= 0:
        return np.array([])
    edges = []
    for other in all_bands:
        if other.kind != "transition":
            continue
        if abs(other.lo - band.hi) < _COINCIDE:
            edges.append(("hi", band.hi))
        if abs(other.hi - band.lo) < _COINCIDE:
            edges.append(("lo", band.lo))
    pts = []
    n, s = band.fixed_edge_count, band.fixed_edge_spacing
    span = (n - 1) * s
    if span >= band.hi - band.lo:
        raise BandTooNarrow(f"band [{band.lo:g}, {band.hi:g}] cannot hold a {n}-point edge cluster")
    for side, edge in edges:
        if side == "hi":
            pts.append(edge - s * np.arange(n - 1, -1, -1))
        else:
            pts.append(edge + s * np.arange(n))
    if not pts:
        return np.array([])
    return np.unique(np.concatenate(pts))


def _run_local_maxima(env: np.ndarray) -> list[int]:
    """Indices of local maxima of env, one per plateau (its lowest index).

    Endpoints qualify only through a strict rise toward them; a constant
    envelope therefore has no maxima at all.
    """
    # collapse runs of equal consecutive values
    starts = [0]
    for i in range(1, env.size):
        if env[i] != env[starts[-1]]:
            starts.append(i)
    vals = [env[i] for i in starts]
    out = []
    for r, v in enumerate(vals):
        left_ok = r > 0 and v > vals[r - 1]
        right_ok = r < len(vals) - 1 and v > vals[r + 1]
        if r == 0:
            is_max = len(vals) > 1 and v > vals[1]
        elif r == len(vals) - 1:
            is_max = left_ok
        else:
            is_max = left_ok and right_ok
        if is_max:
            out.append(starts[r])
    return out


def _select_points(virtual, envelope, count, fixed) -> np.ndarray:
    """Pick `count` total points: the fixed ones plus virtuals chosen by envelope."""
    need = count - fixed.size
    if need < 0:
        raise BandTooNarrow("fixed edge cluster exceeds the actual-point budget")
    available = np.ones(virtual.size, dtype=bool)
    if fixed.size:
        for f in fixed:
            available &= np.abs(virtual - f) > _COINCIDE
    if int(np.count_nonzero(available)) < need:
        raise BandTooNarrow("virtual grid too small for the requested actual points")

    env = np.ones(virtual.size) if envelope is None else np.asarray(envelope, dtype=float)
    chosen: list[int] = []
    taken = ~available

    maxima = _run_local_maxima(env)
    maxima.sort(key=lambda i: (-env[i], i))
    for i in maxima:
        if len(chosen) >= need:
            break
        if not taken[i]:
            chosen.append(i)
            taken[i] = True

    remaining = need - len(chosen)
    if remaining > 0:
        peak = env.max()
        w = np.maximum(env, 0.05 * peak) if peak > 0 else np.ones(env.size)
        cum = np.cumsum(w)
        cum /= cum[-1]
        targets = (np.arange(remaining) + 0.5) / remaining
        for t in targets:
            i = int(np.searchsorted(cum, t))
            i = min(i, virtual.size - 1)
            # walk outward to the nearest free slot, lower index first on ties
            k = 0
            while True:
                if i - k >= 0 and not taken[i - k]:
                    i = i - k
                    break
                if i + k < virtual.size and not taken[i + k]:
                    i = i + k
                    break
                k += 1
            chosen.append(i)
            taken[i] = True

    pts = np.concatenate([fixed, virtual[np.array(sorted(chosen), dtype=int)]]) if chosen \
        else fixed.copy()
    return np.sort(pts)


def _envelope(band: BandSpec, virtual, state, pb_cap=None) -> np.ndarray | None:
    if state is None:
        return None
    if band.kind == "passband":
        delay_err = np.abs(sos.group_delay(state.cascade, virtual) - state.tau)
        scale = delay_err.max()
        env = delay_err / scale if scale > 0 else delay_err
        if pb_cap is not None and pb_cap > 0:
            # fold in the squared-magnitude error, scaled so 1.0 means "at the
            # cap": magnitude bulges near or over the cap outrank delay peaks
            # and get a sample placed on them, otherwise delay error decides
            mag_err = np.abs(np.abs(sos.response(state.cascade, virtual)) ** 2 - 1.0)
            env = np.maximum(env, mag_err / pb_cap)
        return env
    return np.abs(sos.response(state.cascade, virtual))


def build_grid(bands, state=None, pb_cap=None) -> FrequencyGrid:
    """Construct the actual sampling grid, optionally shaped by a filter state.

    `pb_cap` is the passband squared-magnitude error bound; when given, the
    passband envelope also tracks how close the magnitude runs to that bound.
    """
    bands = tuple(sorted(bands, key=lambda b: b.lo))
    for b1, b2 in zip(bands, bands[1:]):
        if b2.lo < b1.hi - _COINCIDE:
            raise ValueError("bands overlap")
    points = []
    for band in bands:
        virtual = band.virtual()
        fixed = _fixed_cluster(band, bands)
        env = _envelope(band, virtual, state, pb_cap)
        points.append(_select_points(virtual, env, band.actual_count, fixed))
    return FrequencyGrid(bands=bands, points=tuple(points))


def refresh_grid(grid: FrequencyGrid, state, pb_cap=None) -> FrequencyGrid:
    """Re-select the actual points against the state's error envelope."""
    return build_grid(grid.bands, state=state, pb_cap=pb_cap)


def verification_grid(bands, points_per_band=4096) -> FrequencyGrid:
    """Dense uniform grid over the same bands, for reporting and checks."""
    bands = tuple(sorted(bands, key=lambda b: b.lo))
    dense = tuple(
        replace(b, virtual_count=points_per_band, actual_count=points_per_band,
                fixed_edge_count=0, fixed_edge_spacing=0.0)
        for b in bands
    )
    points = tuple(np.linspace(b.lo, b.hi, points_per_band) for b in dense)
    return FrequencyGrid(bands=dense, points=points)


def grid_to_csv(grid: FrequencyGrid) -> str:
    """Dump the actual grid as ``omega,band`` CSV text."""
    buf = io.StringIO()
    buf.write("omega,band\n")
    for band, pts in zip(grid.bands, grid.points):
        for w in pts:
            buf.write("%.17g,%s\n" % (w, band.kind))
    return buf.getvalue()

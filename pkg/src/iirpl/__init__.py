"""iirpl: nearly linear-phase IIR filters by sequential cone programming.

The package designs cascade-form IIR filters whose passband group delay is
as flat as the prescribed magnitude limits allow.  Magnitude bounds
(passband ripple, stopband attenuation, optional transition cap) are hard
constraints; the peak passband delay deviation is the minimax objective.
Each outer iteration solves a small second-order cone program for a
trust-region step of the section coefficients, the overall gain, and the
nominal delay.

Layering: sos (cascade model and derivatives) -> sampling (nonuniform
frequency grids) -> subproblem (linearization and cone lowering) -> socp
(interior-point solver) -> loop (iteration and design drivers), with
seeding (starting filters) and metrics (quality reports) alongside and a
command-line front end in cli.
"""

from .errors import (
    BandTooNarrow,
    DegenerateSection,
    DimensionMismatch,
    IirplError,
    IllConditioned,
    InfeasibleSpec,
    InfeasibleStart,
    NumericalBreakdown,
    ParseError,
    PoleOnGrid,
    SubproblemFailed,
)
from .loop import (
    DesignResult,
    LoopConfig,
    design_optimized_delay,
    design_prescribed_delay,
    iterate,
)
from .metrics import QualityReport, compare_table, quality, renormalize_gain
from .sampling import BandSpec, FrequencyGrid, build_grid, passband, refresh_grid, stopband, transition, verification_grid
from .sos import Biquad, DesignState, SosCascade, group_delay, response

__all__ = [
    "Biquad", "SosCascade", "DesignState", "response", "group_delay",
    "BandSpec", "FrequencyGrid", "passband", "stopband", "transition",
    "build_grid", "refresh_grid", "verification_grid",
    "LoopConfig", "DesignResult", "iterate",
    "design_optimized_delay", "design_prescribed_delay",
    "QualityReport", "quality", "renormalize_gain", "compare_table",
    "IirplError", "ParseError", "BandTooNarrow", "PoleOnGrid",
    "DegenerateSection", "DimensionMismatch", "InfeasibleStart",
    "InfeasibleSpec", "SubproblemFailed", "NumericalBreakdown", "IllConditioned",
]

__version__ = "0.1.0"

"""sigtrace: signatures of planar Brownian paths, grid tracing, and
reconstruction of the visited-cell polygon from iterated line integrals."""

from .geometry import GridSpec, RoundedSquare, boxes_for, contains, gauge, segment_first_hit
from .stochastic import (
    PiecewisePath,
    Seed,
    area_at,
    first_hit,
    refine,
    sample_brownian,
    simulate_area_diffusion,
    subpath,
)
from .signature import (
    TensorSeries,
    chen_concat,
    coordinate_iterated_integral,
    identity_series,
    path_signature,
    segment_signature,
    shuffle,
    verify_polynomial_identity,
)
from .forms import (
    BumpForm,
    OneForm,
    approximate_form_by_polynomials,
    bump_form,
    coordinate_form,
    iterated_form_integral,
    line_integral,
    smooth_step,
)
from .tracer import HittingTrace, LatticeWord, box_visits, coincidence, polygon, trace
from .reconstruct import (
    AmbiguousWord,
    ReconstructionResult,
    SignatureTable,
    build_table,
    detect_word,
    frechet_distance,
    reconstruct_polygon,
)
from .harness import ExperimentConfig, Report, run_experiment

__version__ = "0.1.0"

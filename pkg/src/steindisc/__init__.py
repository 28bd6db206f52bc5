"""steindisc: kernel discrepancies with analytic derivative oracles.

Base kernels carry value/gradient/mixed-derivative oracles; targets carry
scores; Stein kernels combine the two so that discrepancies to a target can
be estimated from samples alone.  On top sit quadrature oracles for 1-d
ground truth, tail diagnostics, a wild-bootstrap goodness-of-fit test, an
SVGD particle sampler, and a CLI (``steindisc``) for scripted experiments.
"""

from .kernels import (
    CoordinateMap,
    CustomKernel,
    GaussianKernel,
    IMQKernel,
    InverseLogKernel,
    KernelEval,
    LinearKernel,
    Matern32Kernel,
    ScalarFunction,
    ScalarKernel,
    SechKernel,
    SpectralProfile,
    compose_kernel,
    identity_map,
    iron_spectral,
    kernel_derivatives,
    kernel_from_spec,
    radial_decay,
    scale_profile,
    tilt_kernel,
)
from .targets import (
    CauchyTarget,
    CustomTarget,
    DissipativityParams,
    GaussianMixtureTarget,
    GaussianTarget,
    StudentTTarget,
    Target,
    check_dissipativity,
    score,
    score_growth_probe,
    target_from_spec,
)
from .stein import (
    BoundedTiltBase,
    CenteredKernel,
    DiagonalBase,
    ScalarAsDiagonal,
    SteinKernel,
    VectorField,
    apply_stein_operator,
    bounded_stein_base,
    centered_kernel,
    coercive_stein_function,
    score_tilted_base,
    stein_from_spec,
    stein_kernel,
)
from .discrepancy import (
    DiscrepancyEstimate,
    EmbeddabilityReport,
    SampleSet,
    embeddability_diagnostics,
    ksd_quadrature_1d,
    ksd_score_diff_quadrature,
    ksd_u_stat,
    ksd_v_stat,
    mmd_v_stat,
)
from .inference import SVGDConfig, SvgdDiverged, TestResult, gof_test, rank_samples, svgd_run
from .util import generator

__version__ = "0.1.0"

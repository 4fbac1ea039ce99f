"""Simulation and analysis of a ring-cavity magneto-electric non-reciprocity measurement."""

__version__ = "0.1.0"

from .analysis import (  # noqa: E402
    ConstantsTable,
    EtaEstimate,
    FitResult,
    alpha_ratio_check,
    extract_eta,
    relative_effect,
    smallest_resolvable_delta_n,
    vacuum_projection,
    weighted_linear_fit,
    weighted_mean,
)
from .experiment import (  # noqa: E402
    MeasurementSeries,
    RunConfig,
    RunResult,
    calibrate,
    campaign_table1,
    compress,
    simulate_run,
    sweep_e,
)
from .optics import (  # noqa: E402
    GasMedium,
    RingCavity,
    Rod,
    RodAssembly,
    SagnacContext,
    cavity_split,
    eta_from_slope,
    free_spectral_range,
    ideal_gas_rescale,
    linewidth_fwhm,
    rod_delta_n,
    sagnac_split,
)

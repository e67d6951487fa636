"""Fiber-optical MIMO channel as a lossy chaotic cavity.

Monte Carlo simulation of the mutual-information distribution together with
the large-N saddle-point (replica) mean and Gaussian-fluctuation variance.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ConventionError,
    InvalidSaddleRegion,
    RunAborted,
    SaddleNotConverged,
    SingularChannel,
    SingularResolvent,
    UnsupportedProfile,
)
from .model import (
    ChannelParams,
    ChannelRealization,
    CrosstalkMatrix,
    DeterministicProfile,
    build_effective_matrix,
    derive_rho,
    exact_mean_no_crosstalk,
    mutual_information,
    sample_crosstalk,
)

__all__ = [
    "__version__",
    "ChannelParams",
    "ChannelRealization",
    "ConfigError",
    "ConventionError",
    "CrosstalkMatrix",
    "DeterministicProfile",
    "InvalidSaddleRegion",
    "RunAborted",
    "SaddleNotConverged",
    "SingularChannel",
    "SingularResolvent",
    "UnsupportedProfile",
    "build_effective_matrix",
    "derive_rho",
    "exact_mean_no_crosstalk",
    "mutual_information",
    "sample_crosstalk",
]

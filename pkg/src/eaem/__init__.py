"""Error-budget simulator for entanglement-assisted electron microscopy.

Submodules
----------
kinematics       relativistic beam parameters
specimen         composition, scattering amplitudes, event probabilities
elastic_speckle  Gaussian-beam fields, speckle statistics, diverging-beam failure
inelastic        plasmon angular law, sampling, wedge-prism phase errors, chain model
protocol         Cooper-pair-box k-electron process and estimators
imaging          Monte Carlo image experiment and filters
cli              command-line front end
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConfigurationError,
    DegenerateSpecimenError,
    DomainError,
    EstimationError,
    NumericError,
)

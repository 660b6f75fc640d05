"""Next-to-leading-order capacity of the zero-dispersion nonlinear fiber channel.

Submodules
----------
numerics     quadrature, root finding and minimization kernels
channel      channel parameters and coordinate frames
condpdf      conditional PDF P[Y|X] to O(1/SNR)
outpdf       output PDF for smooth input densities
inputopt     optimal input distribution and its O(Q) correction
capacity     entropies, capacity and power sweeps
montecarlo   stochastic channel simulation used as an oracle
cli          command-line front end
"""

__version__ = "0.1.0"

from .channel import REFERENCE_PARAMS, ChannelParams, PowerPoint  # noqa: E402
from .errors import NlcapError  # noqa: E402

__all__ = ["ChannelParams", "PowerPoint", "REFERENCE_PARAMS", "NlcapError", "__version__"]

"""UAV-assisted unbiased hierarchical federated learning toolkit."""
from .errors import (ConfigError, ConvergenceError, InvalidArgumentError,
                     NumericalError, ZeroMassError)
from .geometry import (ChannelParams, ClusterAssignment, NetworkParams,
                       ResourceConfig, Topology, associate, sample_topology)

__version__ = "0.1.0"

__all__ = [
    "ChannelParams", "ClusterAssignment", "ConfigError", "ConvergenceError",
    "InvalidArgumentError", "NetworkParams", "NumericalError", "ResourceConfig",
    "Topology", "ZeroMassError", "associate", "sample_topology", "__version__",
]

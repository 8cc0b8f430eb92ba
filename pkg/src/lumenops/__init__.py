"""Digital-twin driven lifecycle automation for optical transport networks.

The package bundles a GN-model QoT engine, a calibrating digital twin of
a live field network, route and spectrum planning, and a multi-agent
orchestration layer that runs three lifecycle scenarios end to end.
"""

from .errors import (CalibrationError, CommandError, ConfigError,
                     FactualityError, LumenopsError, PermissionDeniedError,
                     PlanError, ServiceError, TopologyError, TransitionError,
                     UnrecognizedIntent)
from .field import FieldNetwork, init_field
from .qot import REQUIRED_GSNR_DB, QotReport, margin, propagate
from .rsa import (OccupancyMap, ServiceRequest, first_fit, k_shortest_paths,
                  plan_service)
from .scenarios import SCENARIOS, get_scenario, run_scenario
from .topology import (ChannelGrid, NetworkTopology, Service,
                       default_topology, load_topology_file, make_service)
from .twin import DigitalTwin

__version__ = "0.1.0"

__all__ = [
    "CalibrationError", "ChannelGrid", "CommandError", "ConfigError",
    "DigitalTwin", "FactualityError", "FieldNetwork", "LumenopsError",
    "NetworkTopology", "OccupancyMap", "PermissionDeniedError", "PlanError",
    "QotReport", "REQUIRED_GSNR_DB", "SCENARIOS", "Service", "ServiceError",
    "ServiceRequest", "TopologyError", "TransitionError",
    "UnrecognizedIntent", "default_topology", "first_fit", "get_scenario",
    "init_field", "k_shortest_paths", "load_topology_file", "make_service",
    "margin", "plan_service", "propagate", "run_scenario", "__version__",
]

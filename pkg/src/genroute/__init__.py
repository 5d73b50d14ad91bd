"""Routing by variable addresses shaped through gene exchange.

Submodules: ``addressing``, ``topology``, ``genes``, ``engine``, ``routing``,
``assignment``, ``manet``, ``analytics`` and the ``cli`` scenario runner.
"""

from .addressing import Address, NetworkParams, ParameterError, eval_similarity
from .assignment import assign_network, assign_single, check_feasibility
from .engine import SimConfig, run_convergence
from .routing import Outcome, route_packet
from .topology import Topology, generate_adhoc, generate_wired

__version__ = "0.1.0"

__all__ = [
    "Address", "NetworkParams", "ParameterError", "eval_similarity",
    "assign_network", "assign_single", "check_feasibility",
    "SimConfig", "run_convergence",
    "Outcome", "route_packet",
    "Topology", "generate_adhoc", "generate_wired",
]

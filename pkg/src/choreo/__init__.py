"""High-precision search for periodic choreographies of the planar three-body problem."""

from .database import SolutionRecord, deduplicate, detect_pairs
from .nbody import SearchTriplet, build_initial_state, energy, scale_invariant_period
from .newton import NewtonConfig, correct, polish
from .scan import SearchDomain, scan_domain
from .stability import analyze, verify_cross_precision
from .taylor import IntegratorConfig, integrate_to, preset
from .topology import orbit_word, satellite_power

__version__ = "0.1.0"

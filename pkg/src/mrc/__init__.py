"""Declaration resolution engine comparing header provisioning strategies.

Strategies: textual includes, a monolithic precompiled store, rootmap-driven
lazy forward declarations, and per-library module files (preloaded or
imported through a global module index), plus Bloom-filtered symbol
autoloading.
"""

from .meter import CostMeter
from .resolver import MODES, Session, run_script, startup

__all__ = ["CostMeter", "MODES", "Session", "run_script", "startup"]
__version__ = "0.1.0"

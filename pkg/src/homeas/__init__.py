"""Handover measurement performance under Poisson cell layouts and correlated shadowing.

Submodules: ``numerics``, ``field``, ``crossing``, ``scenario``, ``chain``,
``sim`` and ``cli``.
"""

from .scenario import Scenario, preset

__version__ = "0.1.0"
__all__ = ["Scenario", "preset", "__version__"]

"""Event-driven simulation of periodic-lattice jump processes, with closed-form
analytics for their local-equilibrium measure families and a diagnostics suite
for window-averaged convergence checks."""

__version__ = "0.1.0"

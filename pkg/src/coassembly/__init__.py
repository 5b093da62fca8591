"""Human-robot collaborative assembly: detection, planning, and orchestration."""

__version__ = "0.1.0"

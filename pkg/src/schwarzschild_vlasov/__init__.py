"""Massless Vlasov on Schwarzschild: geodesic flow, moments, and the decay/trapping experiments."""

from .geometry import BlackHoleParams, SurfaceSpec

__all__ = ["BlackHoleParams", "SurfaceSpec"]
__version__ = "0.1.0"

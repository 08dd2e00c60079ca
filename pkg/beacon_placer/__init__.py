"""BeaconPlacer - ultrasonic beacon placement for indoor drone localization

Computes the minimum number of 6-sensor beacon arrays, and where to mount them,
so that every point of a drone's flight space hears at least four beacons with
line of sight, then refines the placement to keep the geometric dilution of
precision (GDOP) low. Trilateration, brute-force oracles and a Monte-Carlo
localization simulator are included for verification.
"""
from .__version__ import __version__, __author__, __description__

__all__ = [
    "errors",
    "geometry",
    "localization",
    "gdop",
    "coverage",
    "stage1",
    "stage2",
    "oracle_sim",
    "documents",
    "utils",
    "__version__",
    "__author__",
    "__description__",
]

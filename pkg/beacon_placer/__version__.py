"""Version information for BeaconPlacer"""

__version__ = "0.5.0"
__author__ = "BeaconPlacer developers"
__description__ = "Minimum-count, low-GDOP ultrasonic beacon placement for indoor drone localization"

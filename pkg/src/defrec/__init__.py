"""defrec: deformable-object reconstruction, uncertainty, puncture planning,
and serial-arm DH calibration.
"""

__version__ = "0.1.0"

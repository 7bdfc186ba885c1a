"""Anti-UAV perception core: Acc metric, evidential judging, detection/tracking collaboration."""

__version__ = "0.1.0"

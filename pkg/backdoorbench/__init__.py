"""
BackdoorBench: backdoor attacks and defenses on neural motion planners,
with behaviors specified in signal temporal logic
"""

__version__ = "1.0.0"

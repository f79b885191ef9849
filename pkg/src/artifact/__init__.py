"""Energy-harvesting, cache-enabled small-cell power control.

Value iteration over a discretized battery, a one-step-lookahead online
controller, and a slot-level simulator with sweep experiments.
"""
__version__ = "0.1.0"

"""Closed-loop MPC simulator for PV-CHP hybrid systems with battery and heat storage."""

__version__ = "0.1.0"

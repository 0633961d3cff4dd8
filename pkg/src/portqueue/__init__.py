"""Steady-state performance metrics for hierarchical seaport queueing systems.

Closed-form per-port delays (Erlang-C scaled for Erlang service) plus a
discrete-event simulator used to check them.
"""

__version__ = "0.1.0"

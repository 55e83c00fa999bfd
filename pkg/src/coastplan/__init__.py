"""Distributionally robust co-planning of coastal distribution networks and
PV-storage-EV stations, with carbon-emission-flow pricing of the result."""

__version__ = "0.1.0"

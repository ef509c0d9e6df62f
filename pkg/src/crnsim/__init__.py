"""Slot-synchronous simulator for neighbour discovery and broadcast in cognitive radio networks."""

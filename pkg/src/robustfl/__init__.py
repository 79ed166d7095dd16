"""Robust, privacy-preserving federated learning simulator.

Clients upload secret-shared (direction, amplitude, last-layer direction)
triples; two servers filter them with a two-stage self-tuning DBSCAN,
clip with an adaptive bound, average, add Gaussian noise and broadcast.
"""

__version__ = "0.1.0"

"""Continuous-variable photonic quantum computing simulator.

Subpackages cover a Gaussian symplectic backend, a truncated Fock
backend, teleportation-based gates, time-multiplexed cluster-state
streaming, a dual-loop pulse processor, the GKP code, a small circuit
language, and fiber-loop resource budgeting.
"""

__version__ = "0.1.0"

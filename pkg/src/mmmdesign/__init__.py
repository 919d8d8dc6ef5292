"""Data-driven inverse design of programmable metasurface arrays.

Fourier multiclass blending for meta-atom synthesis, a harmonic incident-phase
stimulus, an implicit Fourier neural operator surrogate with hand-written
reverse-mode gradients, and multitask architecture/stimulus optimization with
Pareto filtering. A deterministic synthetic field oracle stands in for the
full-wave solver.
"""

__version__ = "0.1.0"

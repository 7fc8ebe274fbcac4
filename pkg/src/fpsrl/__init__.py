"""Model-based fuzzy policy learning with particle swarm optimization.

Pipeline: generate transition batches on the simulated benchmarks, fit
neural world models to them, search fuzzy-rule policy parameters with a
particle swarm against the models, then evaluate on the real dynamics.
"""

__version__ = "0.1.0"

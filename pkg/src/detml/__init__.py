"""detml: keep machine learning projects deterministic.

The package statically checks training code for the seed and
determinism settings that reproducible GPU training requires, scaffolds
compliant projects from versioned templates, computes template sync
diffs, and records hardware/run provenance.
"""

__version__ = "0.1.0"

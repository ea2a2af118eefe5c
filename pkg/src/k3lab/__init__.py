"""Computational laboratory for degenerations of elliptic K3 surfaces.

Subpackages cover exact lattice arithmetic, elliptic-modular numerics,
GIT stability of Weierstrass data, singular Kaehler-Einstein metrics on
the base sphere, Satake boundary detection for period frames, and a CLI
for running degeneration experiments end to end.
"""

__version__ = "0.1.0"

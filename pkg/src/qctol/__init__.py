"""Noise thresholds for classically simulable quantum gate sets.

Library layout:

- :mod:`qctol.qmath` dense linear algebra and entanglement primitives
- :mod:`qctol.channels` quantum operations (Choi / Kraus / transfer views)
- :mod:`qctol.thresholds` gate symmetry groups, twirling and split thresholds
- :mod:`qctol.octahedron` single-qubit Clifford-operation geometry
- :mod:`qctol.bmachine` pairing-list Monte-Carlo simulator
- :mod:`qctol.dense_oracle` brute-force reference simulator and statistics
- :mod:`qctol.cli` command-line interface
"""

__version__ = "0.1.0"

SCHEMA_VERSION = "1"

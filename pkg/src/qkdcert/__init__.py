"""Certified key rates for causality-constrained QKD with threshold detectors.

The package is organised bottom-up:

- ``linop``      dense Hermitian linear algebra and entropy primitives
- ``optics``     truncated Fock spaces, coherent states, beam splitter,
                 threshold-detector POVMs, honest channel statistics
- ``squash``     the two-mode -> two-qubit squashing channel and its verifier
- ``causal``     Choi representations and non-signalling checks
- ``entropy``    the convex entropy-vs-statistics tradeoff and its certified
                 lower bounds
- ``finitesize`` second-order accumulation terms, key length, completeness
- ``protocol``   timing constraints, round scheduling, honest simulation
- ``cli``        command line front end
"""

__version__ = "0.1.0"

"""analogylab: a laboratory for analogy problems solved by contrast.

Generates visual and symbolic analogy questions with controllable candidate
regimes, trains small scoring networks on them with a hand-written numeric
stack, and analyses what the trained models represent.
"""

__version__ = "0.1.0"

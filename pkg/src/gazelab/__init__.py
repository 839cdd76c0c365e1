"""gazelab: a desk-scale laboratory for individualized scanpath prediction.

The package covers the full loop: synthetic gaze corpora with controllable
observer traits, an observer-conditioned scanpath model trained on a small
from-scratch autodiff engine, scanpath alignment metrics, ranking and
saliency evaluation, and trait-level analysis, all behind one CLI.
"""

__version__ = "0.1.0"

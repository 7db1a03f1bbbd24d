"""Liver tumor prognostics toolkit.

Desk-scale pipeline covering prompt-propagated 3D segmentation, per-tumor
radiomics, multiple-instance survival prediction, and the survival
statistics needed to evaluate it, plus synthetic phantoms and cohorts that
provide ground truth for every stage.
"""

__version__ = "0.1.0"

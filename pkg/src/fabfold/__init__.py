"""fabfold: fabric pick-and-place manipulation at desk scale.

Simulated cloth, demonstration extraction from hand-keypoint traces,
pick-conditioned place-heatmap policies, and a smoothing+folding
evaluation harness.
"""

__version__ = "0.1.0"

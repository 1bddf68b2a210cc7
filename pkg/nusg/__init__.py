"""
Nested-U salient segmentation on a numpy autodiff core.

Subpackages: `tensor` (autodiff), `nn` (blocks), `model` (architectures and
checkpoints), `metrics` (losses and scores), `data` (dataset pipeline) and
`train` (optimizer, schedule, training and evaluation).
"""

__version__ = "0.1.0"

"""Compact cost-volume stereo matching with shuffle-mixer disparity upsampling."""

from .tensor import Tensor

__all__ = ["Tensor"]
__version__ = "0.1.0"

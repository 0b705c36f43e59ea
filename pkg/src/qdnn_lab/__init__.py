"""Quantization-aware training laboratory for dense networks on synthetic 2-D data.

Subpackages and modules:

- ``data``       synthetic ring dataset, oracle labels, grid sets
- ``nn``         dense-layer math, loss, SGD, gradient checking
- ``quant``      uniform quantizers, step-size search, straight-through rules
- ``models``     plain/residual network build, forward/backward
- ``train``      pretraining, quantized retraining, cyclic-LR fine-tuning
- ``evalviz``    accuracy scoring, prediction maps, PPM emission
- ``checkpoint`` JSON checkpoint files
- ``kernels``    compiled hot kernels with pure-numpy fallback
- ``cli``        the ``qdnn-lab`` command-line entry point
"""

from .kernels import BACKEND as kernel_backend  # noqa: F401

__version__ = "0.1.0"

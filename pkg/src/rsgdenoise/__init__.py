"""Self-supervised real-image denoising with blind-spot networks.

Random sub-sample generation (RSG), pixel-shuffle downsampling (PD), a
centrally masked blind-spot network and the perturbation / sampling
difference training losses, plus training and inference pipelines.
"""

__version__ = "0.1.0"

"""denoiq: task-based image quality assessment of image-denoising networks.

Simulates lumpy-background signal-detection tasks, trains denoising
networks from scratch, and measures how denoising affects numerical-observer
performance via covariance propagation and ROC analysis.
"""

__version__ = "0.1.0"

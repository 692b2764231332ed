"""Desk-scale open-set active learning laboratory.

A numpy implementation of sharpness-aware query selection on synthetic
patch data: SGD/SAM training, atypicality scoring from the SAM-vs-SGD
probability gap, K+1 rejection sampling, and the surrounding
active-learning bookkeeping.
"""

__version__ = "0.1.0"

"""Prototype-prior image classification and zero-shot transfer.

A convolutional network is trained against a fixed output layer whose
columns are unit-norm HOG embeddings of class template images. Swapping the
columns at test time changes the label space without retraining.
"""

__version__ = "0.1.0"

"""Lobster bioacoustics: MFCC features, classical and convolutional
classifiers, stacking and evaluation tooling."""

__version__ = "0.1.0"

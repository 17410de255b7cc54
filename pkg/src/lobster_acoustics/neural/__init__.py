"""Small numpy tensor engine and the 1D-CNN / 1D-DCNN model families."""

from .cnn import (CNNClassifier, CnnSpec, ConvBlock, cnn_backward, cnn_forward, cnn_loss_grad,
                  cnn_predict_proba, dcnn_dilation_schedule, default_spec, init_params, train_cnn)
from .layers import (conv1d_backward, conv1d_forward, conv_output_length, maxpool1d,
                     maxpool1d_backward)

__all__ = ["CNNClassifier", "CnnSpec", "ConvBlock", "cnn_backward", "cnn_forward",
           "cnn_loss_grad", "cnn_predict_proba", "dcnn_dilation_schedule", "default_spec",
           "init_params", "train_cnn", "conv1d_backward", "conv1d_forward",
           "conv_output_length", "maxpool1d", "maxpool1d_backward"]

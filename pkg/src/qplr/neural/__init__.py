"""Minimal NumPy neural-network engine: layers, losses, Adam, checkpoints."""
from .checkpoint import load as load_checkpoint, save as save_checkpoint
from .layers import (Conv2d, Dense, Dropout, Flatten, MaxPool2d, ReLU, Sequential, conv2d_backward,
                     conv2d_forward, dense_backward, dense_forward, dropout_forward, maxpool_backward,
                     maxpool_forward, relu, softmax)
from .losses import entropy, one_hot, smooth_labels, soft_cross_entropy, softmax_cross_entropy
from .models import LeNetSpec, lenet, mlp
from .optim import Adam, AdamState, adam_step
from .tensor import Tensor

from .base import BaseModule
from .net import Classifier, Encoder, LabelError, Linear, MLP, cross_entropy_loss, softmax
from .flow import ActNorm, CouplingLayer, FlowResult, FlowStack
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    'ActNorm', 'BaseModule', 'CheckpointError', 'Classifier', 'CouplingLayer', 'Encoder',
    'FlowResult', 'FlowStack', 'LabelError', 'Linear', 'MLP', 'cross_entropy_loss',
    'load_checkpoint', 'save_checkpoint', 'softmax',
]

from data_science.src.model.encoder_config import EncoderConfig
from data_science.src.model.network import (ForwardMode, ModelParams, LossEvaluation, ENCODER, RECONSTRUCTION_HEAD,
                                            CLASSIFIER_HEAD, GROUPS, init_params, parameter_shapes, encode,
                                            reconstruct, classify, gradients, evaluate_gradients,
                                            reconstruction_objective, classification_objective,
                                            apply_buffer_updates, reinitialize_group, predict_labels)
from data_science.src.model.checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    'EncoderConfig', 'ForwardMode', 'ModelParams', 'LossEvaluation', 'ENCODER', 'RECONSTRUCTION_HEAD',
    'CLASSIFIER_HEAD', 'GROUPS', 'init_params', 'parameter_shapes', 'encode', 'reconstruct', 'classify',
    'gradients', 'evaluate_gradients', 'reconstruction_objective', 'classification_objective',
    'apply_buffer_updates', 'reinitialize_group', 'predict_labels', 'save_checkpoint', 'load_checkpoint',
]

from .network import (NetworkConfig, NetworkParams, build_network, forward, backward,
                      predict_joints, prepare_input, expected_shapes)
from .optim import OptimizerState, adam_step
from .train import PoseDataset, TrainConfig, make_dataset, train
from .checkpoint import load_params, save_params

from .mlp import (MlpModel, backward, encode_illum_input, encode_sensor_input, forward,
                  forward_batch, init_model, loss_and_grad, loss_angular, param_count)
from .optim import AdamState, adam_step, step_lr
from .serialize import load_model, model_from_dict, model_to_dict, save_model
from .train import (TrainConfig, TrainLog, finetune_oracle, select_hard_pairs,
                    train_illum_mlp, train_sensor_mlp)

__all__ = [
    "MlpModel", "backward", "encode_illum_input", "encode_sensor_input", "forward",
    "forward_batch", "init_model", "loss_and_grad", "loss_angular", "param_count",
    "AdamState", "adam_step", "step_lr", "load_model", "model_from_dict", "model_to_dict",
    "save_model", "TrainConfig", "TrainLog", "finetune_oracle", "select_hard_pairs",
    "train_illum_mlp", "train_sensor_mlp",
]

from softpinn.networks.ansatz import ansatz_dt, ansatz_eval
from softpinn.networks.gru import GRUWeights, gru_rollout, gru_step, init_gru
from softpinn.networks.mlp import MLPWeights, init_mlp, mlp_backward, mlp_forward
from softpinn.networks.scaler import MinMax, Scaler, inflated_scaler
from softpinn.networks.surrogate import (
    SurrogateModel,
    init_surrogate,
    self_loop_rollout,
    surrogate_dt,
    surrogate_predict,
)
from softpinn.networks.weights_file import (
    load_gru,
    load_surrogate,
    save_gru,
    save_surrogate,
)

__all__ = [
    "GRUWeights",
    "MLPWeights",
    "MinMax",
    "Scaler",
    "SurrogateModel",
    "ansatz_dt",
    "ansatz_eval",
    "gru_rollout",
    "gru_step",
    "inflated_scaler",
    "init_gru",
    "init_mlp",
    "init_surrogate",
    "load_gru",
    "load_surrogate",
    "mlp_backward",
    "mlp_forward",
    "save_gru",
    "save_surrogate",
    "self_loop_rollout",
    "surrogate_dt",
    "surrogate_predict",
]

from softpinn.identification.dataset import Dataset, load_dataset, save_dataset
from softpinn.identification.result_file import load_ident_result, save_ident_result
from softpinn.identification.signal import estimate_acceleration
from softpinn.identification.three_step import (
    IdentResult,
    identify_all,
    identify_contact,
    identify_friction,
    identify_stiffness,
)

__all__ = [
    "Dataset",
    "IdentResult",
    "estimate_acceleration",
    "identify_all",
    "identify_contact",
    "identify_friction",
    "identify_stiffness",
    "load_dataset",
    "load_ident_result",
    "save_dataset",
    "save_ident_result",
]

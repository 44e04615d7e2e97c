"""Named settings for the pipeline: `smoke` checks the plumbing in minutes,
`desk` is sized for a workstation and `full` runs the full-scale budgets.
"""

from typing import Callable, Dict, List

from softpinn.config.settings import (
    AshaSettings,
    BenchSettings,
    ControlSettings,
    DataSettings,
    EvaluationSettings,
    RecurrentSettings,
    SettingsFile,
    SurrogateSettings,
)


def smoke_settings() -> SettingsFile:
    return SettingsFile(
        data=DataSettings(n_joints=2, train_duration=60.0),
        surrogate=SurrogateSettings(
            n_e=50,
            n_s=10,
            n_p=2048,
            n_0=410,
            n_b=256,
            n_a=4,
            n_n=32,
            n_h=2,
            n_lambda=10,
            lr_0=2e-3,
            lr_min=1e-5,
        ),
        recurrent=RecurrentSettings(
            n_e=50, n_b=25, n_n=32, n_h=1, dropout=0.0, n_lambda=10, lr_0=3e-3, lr_min=1e-5
        ),
        asha=AshaSettings(n_trials=4, grace_period=2, reduction_factor=2, max_epochs=8),
        evaluation=EvaluationSettings(duration=4.0),
        bench=BenchSettings(duration=4.0, warmup=10),
        control=ControlSettings(duration=2.0, domains=["me=0,beta=0", "me=0.2,beta=90"]),
    )


def desk_settings() -> SettingsFile:
    return SettingsFile(
        data=DataSettings(n_joints=5, train_duration=900.0),
        surrogate=SurrogateSettings(
            n_e=300,
            n_s=25,
            n_p=20000,
            n_0=4000,
            n_b=512,
            n_a=20,
            n_n=64,
            n_h=2,
            n_lambda=20,
            lr_0=1e-3,
            lr_min=5e-5,
        ),
        recurrent=RecurrentSettings(
            n_e=150, n_b=25, n_n=64, n_h=2, dropout=0.1, n_lambda=10, lr_0=2e-3, lr_min=1e-5
        ),
        asha=AshaSettings(
            n_trials=12, grace_period=25, reduction_factor=2, max_epochs=200, max_concurrency=2
        ),
    )


def full_settings() -> SettingsFile:
    return SettingsFile(
        data=DataSettings(n_joints=5, train_duration=3600.0),
        surrogate=SurrogateSettings(
            n_e=1000,
            n_s=250,
            n_p=100000,
            n_0=20000,
            n_b=512,
            n_a=50,
            n_n=100,
            n_h=2,
            n_lambda=50,
            lr_0=5e-4,
            lr_min=5e-5,
        ),
        recurrent=RecurrentSettings(
            n_e=300, n_b=25, n_n=100, n_h=2, dropout=0.1, n_lambda=10, lr_0=1e-3, lr_min=1e-5
        ),
        asha=AshaSettings(
            n_trials=100, grace_period=500, reduction_factor=2, max_epochs=1000, max_concurrency=4
        ),
    )


PRESETS: Dict[str, Callable[[], SettingsFile]] = {
    "smoke": smoke_settings,
    "desk": desk_settings,
    "full": full_settings,
}


def preset_names() -> List[str]:
    return list(PRESETS)


def load_preset(name: str) -> SettingsFile:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {preset_names()}") from None
    return factory()

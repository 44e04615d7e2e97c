from softpinn.testbench.excitation import (
    EXCITATION_P_MAX,
    evaluation_protocol,
    generate_excitation,
    training_protocol,
)
from softpinn.testbench.generalization import (
    DOMAIN_GRID,
    GeneralizationCell,
    IntegratorPredictor,
    Predictor,
    RecurrentPredictor,
    SurrogatePredictor,
    cross_domain_ratio,
    evaluate_generalization,
    evaluation_inputs,
    save_generalization,
)
from softpinn.testbench.plant import (
    bench_sensors,
    quantizing_sensors,
    record_excitation,
    simulate_plant,
)
from softpinn.testbench.speed import (
    BenchMethod,
    BenchTrajectory,
    TimingRow,
    bench_speed,
    benchmark_trajectory,
    integrator_method,
    save_timing,
    standard_methods,
    surrogate_method,
)

__all__ = [
    "BenchMethod",
    "BenchTrajectory",
    "DOMAIN_GRID",
    "EXCITATION_P_MAX",
    "GeneralizationCell",
    "IntegratorPredictor",
    "Predictor",
    "RecurrentPredictor",
    "SurrogatePredictor",
    "TimingRow",
    "bench_sensors",
    "bench_speed",
    "benchmark_trajectory",
    "cross_domain_ratio",
    "evaluate_generalization",
    "evaluation_inputs",
    "evaluation_protocol",
    "generate_excitation",
    "integrator_method",
    "quantizing_sensors",
    "record_excitation",
    "save_generalization",
    "save_timing",
    "simulate_plant",
    "standard_methods",
    "surrogate_method",
    "training_protocol",
]

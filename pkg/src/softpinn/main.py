import logging
import os
from argparse import ArgumentParser, Namespace
from typing import List, Optional

import numpy as np

from softpinn.config.config import ExperimentConfigFromValues
from softpinn.config.presets import load_preset, preset_names
from softpinn.config.settings import (
    SettingsFile,
    asha_config_from_settings,
    boundaries_from_file,
    gru_config_from_settings,
    load_settings,
    parse_domain,
    train_config_from_settings,
    training_excitation,
)
from softpinn.control.closed_loop import save_campaign
from softpinn.dynamics.model import FirstPrinciplesDynamics
from softpinn.dynamics.robot_file import load_robot_model, save_robot_model
from softpinn.dynamics.robot_model import RobotModel, default_robot_model
from softpinn.dynamics.types import Domain
from softpinn.identification.dataset import load_dataset, save_dataset
from softpinn.identification.result_file import save_ident_result
from softpinn.identification.three_step import identify_all
from softpinn.networks.weights_file import load_gru, load_surrogate, save_gru, save_surrogate
from softpinn.pipeline import (
    control_campaign,
    generalization_predictors,
    run_pipeline,
    sensors_from_settings,
    stage_seed,
)
from softpinn.testbench.generalization import (
    DOMAIN_GRID,
    evaluate_generalization,
    save_generalization,
)
from softpinn.testbench.plant import record_excitation
from softpinn.testbench.speed import bench_speed, benchmark_trajectory, save_timing, standard_methods
from softpinn.training.asha import (
    RecurrentTrialFactory,
    SurrogateTrialFactory,
    TrialFactory,
    asha_optimize,
    load_search_space,
    save_asha_report,
)
from softpinn.training.gru_trainer import save_gru_history, train_gru
from softpinn.training.pinn import save_history, train_pinn

THREADS_ENV = "SOFTPINN_THREADS"


def configure_threads() -> Optional[int]:
    """Applies SOFTPINN_THREADS to the compiled kernels, if set"""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return None
    try:
        threads = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if threads < 1:
        raise ValueError(f"{THREADS_ENV} must be positive, got {threads}")

    import numba

    numba.set_num_threads(threads)
    return threads


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="softpinn")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level of the library code",
    )
    parser.add_argument(
        "--preset",
        default="desk",
        choices=preset_names(),
        help="Named settings used when --settings is not given",
    )
    parser.add_argument(
        "--settings",
        help="JSON settings document; overrides --preset",
    )
    parser.add_argument("--seed", type=int, default=0, help="Root seed")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="Record a training excitation on the simulated bench")
    gen.add_argument("--robot", help="Robot model JSON; defaults to the built-in robot")
    gen.add_argument("--domain", default="me=0,beta=0", help="Domain as me=<kg>,beta=<deg>")
    gen.add_argument("--duration", type=float, help="Seconds; defaults to the settings")
    gen.add_argument(
        "--sensors",
        choices=["none", "quantizing", "bench"],
        help="Sensor model; defaults to the settings",
    )
    gen.add_argument("--out", required=True, help="Dataset CSV to write")

    ident = sub.add_parser("identify", help="Three-step identification from a recorded dataset")
    ident.add_argument("--data", required=True, help="Dataset CSV")
    ident.add_argument("--robot", help="Prior robot model JSON; defaults to the built-in robot")
    ident.add_argument(
        "--refine",
        action="store_true",
        help="Refit stiffness and friction jointly after the three steps",
    )
    ident.add_argument(
        "--recorded-velocity",
        action="store_true",
        help="Use the logged velocities unfiltered (noiseless recordings)",
    )
    ident.add_argument("--out-dir", required=True, help="Directory for ident.json and robot_identified.json")

    train = sub.add_parser("train", help="Train one model")
    train.add_argument("model", choices=["ddpinn", "pinc", "gru"])
    train.add_argument("--robot", help="Robot model JSON the physics loss uses")
    train.add_argument("--data", help="Dataset CSV; required for gru and for the data loss")
    train.add_argument("--out", required=True, help="Weights JSON; the history goes next to it")

    hpo = sub.add_parser("hpo", help="Asynchronous successive halving over a search space")
    hpo.add_argument("--space", required=True, help="Search space JSON")
    hpo.add_argument("--robot", help="Robot model JSON the physics loss uses")
    hpo.add_argument("--data", help="Dataset CSV; required for recurrent targets")
    hpo.add_argument("--trials", type=int, help="Number of trials; defaults to the settings")
    hpo.add_argument("--out", required=True, help="Report JSON to write")

    gen_eval = sub.add_parser("eval-gen", help="Rollout accuracy across domains")
    gen_eval.add_argument("--robot", help="Robot model JSON the ground truth is simulated with")
    gen_eval.add_argument("--identified", help="Identified robot model JSON; defaults to --robot")
    gen_eval.add_argument("--ddpinn", help="DD-PINN weights JSON")
    gen_eval.add_argument("--pinc", help="PINC weights JSON")
    gen_eval.add_argument("--gru", help="GRU weights JSON")
    gen_eval.add_argument(
        "--domain",
        action="append",
        help="Domain as me=<kg>,beta=<deg>; repeat for several, defaults to the twelve-cell grid",
    )
    gen_eval.add_argument("--out", required=True, help="Error table CSV to write")

    bench = sub.add_parser("bench", help="Time surrogates against fixed-step integrators")
    bench.add_argument("--robot", help="Robot model JSON")
    bench.add_argument("--ddpinn", help="DD-PINN weights JSON")
    bench.add_argument("--pinc", help="PINC weights JSON")
    bench.add_argument("--out", required=True, help="Timing table CSV to write")

    mpc = sub.add_parser("mpc-sim", help="PI and MPC tracking on the simulated robot")
    mpc.add_argument("--weights", required=True, help="Surrogate weights JSON the MPC predicts with")
    mpc.add_argument("--robot", help="Robot model JSON of the plant")
    mpc.add_argument(
        "--domain",
        action="append",
        help="Domain as me=<kg>,beta=<deg>; repeat for several, defaults to the settings",
    )
    mpc.add_argument("--duration", type=float, default=40.0, help="Seconds per experiment")
    mpc.add_argument("--out", required=True, help="Campaign CSV to write")

    run_all = sub.add_parser("run-all", help="Every stage end to end")
    run_all.add_argument("--robot", help="Robot model JSON; defaults to the built-in robot")
    run_all.add_argument("--hpo-space", help="Search space JSON; hpo is skipped without it")
    run_all.add_argument(
        "--domain",
        action="append",
        help="Generalization domain; repeat for several, defaults to the twelve-cell grid",
    )
    run_all.add_argument("--out-dir", required=True, help="Directory for every artifact")
    return parser


def main(argv: Optional[List[str]] = None) -> None:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(message)s",
    )
    threads = configure_threads()
    if threads is not None:
        print(f"Using {threads} kernel threads")

    settings = settings_from_args(args)
    if args.command == "gen-data":
        gen_data(args, settings)
    elif args.command == "identify":
        identify(args, settings)
    elif args.command == "train":
        train(args, settings)
    elif args.command == "hpo":
        hpo(args, settings)
    elif args.command == "eval-gen":
        eval_gen(args, settings)
    elif args.command == "bench":
        bench(args, settings)
    elif args.command == "mpc-sim":
        mpc_sim(args, settings)
    else:
        run_all(args, settings)


def settings_from_args(args: Namespace) -> SettingsFile:
    if args.settings is not None:
        return load_settings(args.settings)
    return load_preset(args.preset)


def robot_from_args(path: Optional[str], settings: SettingsFile) -> RobotModel:
    if path is None:
        return default_robot_model(settings.data.n_joints)
    return load_robot_model(path)


def domains_from_args(texts: Optional[List[str]], default: List[Domain]) -> List[Domain]:
    if not texts:
        return list(default)
    return [parse_domain(text) for text in texts]


def gen_data(args: Namespace, settings: SettingsFile) -> None:
    robot = robot_from_args(args.robot, settings)
    if args.duration is not None:
        settings.data.train_duration = args.duration
    if args.sensors is not None:
        settings.data.sensors = args.sensors
    delta = parse_domain(args.domain)
    print(
        f"Recording {settings.data.train_duration:g} s on {robot.n} joints in {delta.describe()} "
        f"with {settings.data.sensors} sensors..."
    )
    dataset = record_excitation(
        FirstPrinciplesDynamics(robot),
        training_excitation(settings),
        delta,
        np.random.default_rng(stage_seed(args.seed, "gen-data")),
        n=robot.n,
        sensors=sensors_from_settings(settings),
    )
    save_dataset(args.out, dataset)
    print(f"Wrote {len(dataset)} samples to {args.out}")


def identify(args: Namespace, settings: SettingsFile) -> None:
    print(f"Loading {args.data}...")
    dataset = load_dataset(args.data)
    prior = robot_from_args(args.robot, settings)
    print("Identifying stiffness, friction and contact...")
    result = identify_all(
        dataset,
        prior,
        refine=args.refine or settings.data.refine_identification,
        recorded_velocity=args.recorded_velocity,
    )
    os.makedirs(args.out_dir, exist_ok=True)
    save_ident_result(result, os.path.join(args.out_dir, "ident.json"))
    save_robot_model(result.apply(prior), os.path.join(args.out_dir, "robot_identified.json"))
    if result.unidentified:
        print(f"Kept from the prior: {', '.join(result.unidentified)}")
    print(f"Wrote ident.json and robot_identified.json to {args.out_dir}")


def history_path(out: str) -> str:
    root, _ = os.path.splitext(out)
    return f"{root}_history.csv"


def train(args: Namespace, settings: SettingsFile) -> None:
    seed = stage_seed(args.seed, "train")
    datasets = [load_dataset(args.data)] if args.data is not None else None
    if args.model == "gru":
        if datasets is None:
            raise ValueError("training the gru needs --data")
        print(f"Training gru for {settings.recurrent.n_e} epochs...")
        gru = train_gru(
            gru_config_from_settings(settings, seed),
            datasets,
            T_s=settings.surrogate.T_s,
            boundaries=boundaries_from_file(settings.boundaries),
        )
        save_gru(gru.weights, args.out)
        save_gru_history(history_path(args.out), gru.history)
        print(f"Best validation {gru.best_validation:.4e} at epoch {gru.best_epoch}")
        return

    robot = robot_from_args(args.robot, settings)
    overrides = {"n_a": 0} if args.model == "pinc" else None
    print(f"Training {args.model} for {settings.surrogate.n_e} epochs...")
    result = train_pinn(
        train_config_from_settings(settings, seed, overrides),
        FirstPrinciplesDynamics(robot),
        datasets=datasets if settings.surrogate.use_data else None,
    )
    save_surrogate(result.model, args.out)
    save_history(history_path(args.out), result.history)
    print(f"Best validation {result.best_validation:.4e} at epoch {result.best_epoch}")


def hpo(args: Namespace, settings: SettingsFile) -> None:
    if args.trials is not None:
        settings.asha.n_trials = args.trials
    space, target = load_search_space(args.space)
    asha = asha_config_from_settings(settings, stage_seed(args.seed, "hpo"))
    factory: TrialFactory
    if target == "surrogate":
        datasets = [load_dataset(args.data)] if args.data is not None else None
        factory = SurrogateTrialFactory(
            train_config_from_settings(settings, asha.seed),
            FirstPrinciplesDynamics(robot_from_args(args.robot, settings)),
            datasets=datasets if settings.surrogate.use_data else None,
        )
    else:
        if args.data is None:
            raise ValueError("a recurrent search space needs --data")
        factory = RecurrentTrialFactory(
            gru_config_from_settings(settings, asha.seed),
            [load_dataset(args.data)],
            T_s=settings.surrogate.T_s,
            boundaries=boundaries_from_file(settings.boundaries),
        )
    print(f"Searching {space.names} with {asha.n_trials} trials...")
    report = asha_optimize(space, asha, factory)
    save_asha_report(report, args.out)
    print(f"Best trial {report.best_trial}: {report.best_params} (loss {report.best_loss:.4e})")


def eval_gen(args: Namespace, settings: SettingsFile) -> None:
    robot = robot_from_args(args.robot, settings)
    identified = load_robot_model(args.identified) if args.identified is not None else robot
    predictors = generalization_predictors(
        FirstPrinciplesDynamics(identified),
        ddpinn=load_surrogate(args.ddpinn) if args.ddpinn is not None else None,
        pinc=load_surrogate(args.pinc) if args.pinc is not None else None,
        gru=load_gru(args.gru) if args.gru is not None else None,
        T_s=settings.surrogate.T_s,
    )
    domains = domains_from_args(args.domain, DOMAIN_GRID)
    print(f"Evaluating {[p.name for p in predictors]} in {len(domains)} domains...")
    cells = evaluate_generalization(
        predictors,
        FirstPrinciplesDynamics(robot),
        domains,
        duration=settings.evaluation.duration,
        rng=np.random.default_rng(stage_seed(args.seed, "eval-gen")),
        T_s=settings.surrogate.T_s,
    )
    save_generalization(args.out, cells)
    print(f"Wrote {len(cells)} cells to {args.out}")


def bench(args: Namespace, settings: SettingsFile) -> None:
    fp = FirstPrinciplesDynamics(robot_from_args(args.robot, settings))
    T_s = settings.surrogate.T_s
    print(f"Simulating a {settings.bench.duration:g} s benchmark trajectory...")
    trajectory = benchmark_trajectory(
        fp,
        np.random.default_rng(stage_seed(args.seed, "bench")),
        duration=settings.bench.duration,
        T_s=T_s,
    )
    methods = standard_methods(
        fp,
        ddpinn=load_surrogate(args.ddpinn) if args.ddpinn is not None else None,
        pinc=load_surrogate(args.pinc) if args.pinc is not None else None,
        T_s=T_s,
    )
    rows = bench_speed(methods, trajectory, warmup=settings.bench.warmup)
    save_timing(args.out, rows)
    for row in rows:
        print(f"  {row.method}: {row.mean_ms:.3f} ms per horizon, speedup {row.speedup:.1f}")


def mpc_sim(args: Namespace, settings: SettingsFile) -> None:
    model = load_surrogate(args.weights)
    robot = robot_from_args(args.robot, settings)
    domains = domains_from_args(
        args.domain, [parse_domain(text) for text in settings.control.domains]
    )
    print(f"Tracking for {args.duration:g} s in {len(domains)} domains...")
    metrics = control_campaign(
        FirstPrinciplesDynamics(robot),
        model,
        settings,
        domains,
        np.random.default_rng(stage_seed(args.seed, "mpc-sim")),
        duration=args.duration,
    )
    save_campaign(args.out, metrics)
    for m in metrics:
        print(
            f"  {m.controller} {m.domain.describe()}: {np.degrees(m.mae):.2f} deg, "
            f"{m.update_rate:.1f} Hz"
        )


def run_all(args: Namespace, settings: SettingsFile) -> None:
    os.makedirs(args.out_dir, exist_ok=True)
    robot_path = args.robot
    if robot_path is None:
        robot_path = os.path.join(args.out_dir, "robot.json")
        print(f"Writing the built-in {settings.data.n_joints}-joint robot to {robot_path}...")
        save_robot_model(default_robot_model(settings.data.n_joints), robot_path)
    settings_path = args.settings
    if settings_path is None:
        settings_path = os.path.join(args.out_dir, "settings.json")
        print(f"Writing the {args.preset} preset to {settings_path}...")
        with open(settings_path, "w") as f:
            f.write(settings.model_dump_json(indent=2) + "\n")

    config = ExperimentConfigFromValues(
        robot_model_path=robot_path,
        train_config_path=settings_path,
        hpo_space_path=args.hpo_space,
        domain_grid=domains_from_args(args.domain, DOMAIN_GRID),
        output_dir=args.out_dir,
        seed=args.seed,
    )
    print(f"Running every stage into {args.out_dir}...")
    run_pipeline(config, settings)
    print("Done")


if __name__ == "__main__":
    main()

"""Desk-scale campaigns over one shared pipeline run: training convergence,
cross-domain accuracy of the trained models and closed-loop tracking. The
run takes hours; every test here is slow.
"""

import os

import numpy as np
import pytest

from softpinn.config.config import ExperimentConfigFromValues
from softpinn.config.presets import desk_settings
from softpinn.dynamics import default_robot_model
from softpinn.dynamics.robot_file import save_robot_model
from softpinn.pipeline import run_pipeline
from softpinn.testbench import DOMAIN_GRID
from softpinn.training.pinn import load_history
from softpinn.util.csv_io import CsvTable, read_table
from softpinn.util.schema import dump_document

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory) -> str:
    root = tmp_path_factory.mktemp("desk")
    robot_path = str(root / "robot.json")
    save_robot_model(default_robot_model(5), robot_path)
    settings = desk_settings()
    settings.data.sensors = "none"
    settings.data.refine_identification = True
    settings_path = str(root / "settings.json")
    dump_document(settings, settings_path)
    return run_pipeline(
        ExperimentConfigFromValues(
            robot_model_path=robot_path,
            train_config_path=settings_path,
            hpo_space_path=None,
            domain_grid=list(DOMAIN_GRID),
            output_dir=str(root / "out"),
            seed=0,
        )
    )


def _model_rows(table: CsvTable, name: str) -> np.ndarray:
    codes = dict(item.split("=") for item in table.meta["models"].split(","))
    return table.data[table.column("model") == float(codes[name])]


def _in_domain(rows: np.ndarray, columns, m_e: float, beta_deg: float) -> np.ndarray:
    me = rows[:, columns.index("me")]
    beta = rows[:, columns.index("beta_deg")]
    return rows[np.isclose(me, m_e) & np.isclose(beta, beta_deg)]


def test_ddpinn_converges_faster_than_pinc(desk_run):
    ddpinn = load_history(os.path.join(desk_run, "ddpinn_history.csv"))
    pinc = load_history(os.path.join(desk_run, "pinc_history.csv"))
    assert len(ddpinn) == len(pinc)
    assert ddpinn[-1].L_vp < pinc[-1].L_vp
    assert ddpinn[-1].L_vp <= ddpinn[0].L_vp / 10


def test_ddpinn_generalizes_across_domains(desk_run):
    table = read_table(os.path.join(desk_run, "generalization.csv"), kind="generalization")
    ddpinn = _model_rows(table, "ddpinn")
    columns = table.columns
    assert ddpinn.shape[0] == len(DOMAIN_GRID)
    nominal = _in_domain(ddpinn, columns, 0.0, 0.0)
    assert nominal[0, columns.index("e_q_deg")] <= 3.0
    assert np.all(ddpinn[:, columns.index("ratio")] <= 1.25)


def test_gru_degrades_in_the_far_domain(desk_run):
    table = read_table(os.path.join(desk_run, "generalization.csv"), kind="generalization")
    gru = _model_rows(table, "gru")
    columns = table.columns
    far = _in_domain(gru, columns, 0.2, 90.0)
    assert far.shape[0] == 1
    assert far[0, columns.index("ratio")] >= 1.5


def test_mpc_tracks_better_than_pi(desk_run):
    table = read_table(os.path.join(desk_run, "tracking.csv"), kind="tracking_campaign")
    controller = table.column("controller")
    error = table.column("e_q_deg")
    assert np.count_nonzero(controller == 0) == np.count_nonzero(controller == 1) == 6
    assert np.mean(error[controller == 1]) < np.mean(error[controller == 0])

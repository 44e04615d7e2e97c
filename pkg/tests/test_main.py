import pytest

from softpinn.identification.dataset import load_dataset
from softpinn.main import build_parser, configure_threads, history_path, main


def test_mpc_sim_arguments():
    args = build_parser().parse_args(
        ["mpc-sim", "--weights", "w.json", "--domain", "me=0.2,beta=90", "--out", "t.csv"]
    )
    assert args.command == "mpc-sim"
    assert args.duration == 40.0
    assert args.domain == ["me=0.2,beta=90"]
    assert args.robot is None
    assert args.preset == "desk"


def test_identify_runs_the_sequential_steps_unless_asked():
    parser = build_parser()
    args = parser.parse_args(["identify", "--data", "d.csv", "--out-dir", "ident"])
    assert not args.refine and not args.recorded_velocity
    args = parser.parse_args(
        ["identify", "--data", "d.csv", "--out-dir", "ident", "--refine", "--recorded-velocity"]
    )
    assert args.refine and args.recorded_velocity


def test_train_needs_a_known_model():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["train", "lstm", "--out", "w.json"])


def test_history_next_to_weights():
    assert history_path("out/ddpinn.json") == "out/ddpinn_history.csv"


def test_threads_unset(monkeypatch):
    monkeypatch.delenv("SOFTPINN_THREADS", raising=False)
    assert configure_threads() is None


@pytest.mark.parametrize("value", ["many", "0"])
def test_threads_invalid(monkeypatch, value):
    monkeypatch.setenv("SOFTPINN_THREADS", value)
    with pytest.raises(ValueError):
        configure_threads()


def test_gen_data_writes_a_dataset(tmp_path, capsys):
    out = str(tmp_path / "data.csv")
    main(
        [
            "--preset",
            "smoke",
            "gen-data",
            "--duration",
            "0.2",
            "--sensors",
            "none",
            "--domain",
            "me=0.1,beta=45",
            "--out",
            out,
        ]
    )
    dataset = load_dataset(out)
    assert len(dataset) == 10
    assert dataset.n == 2
    assert dataset.domain.m_e == 0.1
    assert "Wrote 10 samples" in capsys.readouterr().out

import csv
import json

import numpy as np
import pytest

from eprsim import synth
from eprsim.cli import main
from eprsim.config import paper_config
from eprsim.fit import model_db
from eprsim.spectral import paper_params


def write_config(path, **acq):
    raw = paper_config()
    raw["acquisition"].update({"n_frames": 150, "n_points": 2049, "seed": 11})
    raw["acquisition"].update(acq)
    path.write_text(json.dumps(raw))
    return path


@pytest.fixture
def small_config(tmp_path):
    return write_config(tmp_path / "small.json")


@pytest.fixture(scope="module")
def round_trip(tmp_path_factory):
    d = tmp_path_factory.mktemp("rt")
    cfg = write_config(d / "c.json")
    assert main(["predict", "--config", str(cfg), "--out", str(d / "pred"), "--reproducible"]) == 0
    assert main(["simulate", "--config", str(cfg), "--out", str(d / "sim"), "--reproducible"]) == 0
    assert main(["analyze", "--config", str(cfg), "--frames", str(d / "sim"), "--out", str(d / "ana")]) == 0
    pred = json.loads((d / "pred" / "predict.json").read_text())
    rep = json.loads((d / "ana" / "report.json").read_text())
    return d, cfg, pred, rep


# --- predict ---------------------------------------------------------------


def test_predict_paper_defaults(tmp_path, capsys):
    assert main(["predict", "--out", str(tmp_path), "--reproducible"]) == 0
    doc = json.loads((tmp_path / "predict.json").read_text())
    assert doc["efficiency"]["eta_total"] == pytest.approx(0.94 * 0.76, rel=1e-12)
    assert doc["combos"]["x_minus"]["low_frequency_db"] == pytest.approx(-4.5, abs=1e-10)
    assert doc["duan"]["wavepacket"] < 1
    assert "generated_at" not in doc["metadata"]
    assert "eta_total=0.7144" in capsys.readouterr().out


def test_predict_trivial_setup_is_shot_noise(tmp_path):
    raw = {
        "version": 1,
        "experiment": {"r0": 0.0, "eta_state": 1, "eta_opa": 1, "eta_hd": 1, "eta_extra": 1, "gain_db": 0},
    }
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(raw))
    assert main(["predict", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "predict.json").read_text())
    for c in doc["combos"].values():
        for key in ("low_frequency_db", "pointwise_db", "pointwise_band_db", "wavepacket_db"):
            assert c[key] == pytest.approx(0.0, abs=1e-12)
    assert doc["duan"]["pointwise"] == pytest.approx(1.0, abs=1e-12)
    assert "generated_at" in doc["metadata"]


def test_predict_gain_sweep_is_monotone(tmp_path):
    main(["predict", "--out", str(tmp_path), "--reproducible"])
    sweep = json.loads((tmp_path / "predict.json").read_text())["gain_sweep"]
    eta = [row["eta_meas"] for row in sweep]
    level = [row["x_minus_low_frequency_db"] for row in sweep]
    assert np.all(np.diff(eta) > 0)
    assert np.all(np.diff(level) < 0)
    assert eta[0] == pytest.approx(0.19, rel=1e-12)


def test_predict_with_lock_metadata(tmp_path):
    raw = paper_config()
    raw["lock"] = {"n_cycles": 20}
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(raw))
    assert main(["predict", "--config", str(cfg), "--out", str(tmp_path), "--reproducible"]) == 0
    doc = json.loads((tmp_path / "predict.json").read_text())
    lock = doc["metadata"]["lock"]
    assert lock["residual_rms_rad"] > 0
    assert doc["source"]["phase_rms_rad"] == lock["residual_rms_rad"]
    assert doc["combos"]["x_minus"]["low_frequency_db"] > -4.5


# --- simulate / analyze ----------------------------------------------------


def test_simulate_outputs(round_trip):
    d, _, _, _ = round_trip
    x = synth.load_frames(d / "sim" / "signal_x.frm")
    assert x.data.shape == (150, 2, 2049)
    assert x.quadrature == "x"
    assert (d / "sim" / "csv" / "shot_vac_frame00000.csv").exists()
    assert json.loads((d / "sim" / "simulate.json").read_text())["files"]["shot"] == "shot.frm"


def test_analyze_agrees_with_predict(round_trip):
    _, _, pred, rep = round_trip
    for label, c in pred["combos"].items():
        assert rep["noise_db"][label] == pytest.approx(c["pointwise_db"], abs=0.15)
        assert rep["noise_db_band"][label] == pytest.approx(c["pointwise_band_db"], abs=0.15)
        assert rep["wavepacket_db"][label] == pytest.approx(c["wavepacket_db"], abs=0.15)


def test_analyze_writes_curves(round_trip):
    d, _, _, rep = round_trip
    rows = list(csv.reader(open(d / "ana" / "autocorrelation.csv")))
    assert rows[0][:2] == ["lag_s", "p_minus"]
    assert len(rows) == 50
    assert list(csv.reader(open(d / "ana" / "wavepacket.csv")))[0][0] == "window_index"
    assert rep["metadata"]["seeds"] == {"x": 11, "p": 11, "shot": 11}


def test_report_is_byte_identical_when_reproducible(tmp_path, small_config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["report", "--config", str(small_config), "--out", str(a), "--reproducible"]) == 0
    assert main(["report", "--config", str(small_config), "--out", str(b), "--reproducible"]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    doc = json.loads((a / "report.json").read_text())
    assert "prediction" in doc["metadata"]


def test_seed_flag_overrides_config(tmp_path, small_config):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["report", "--config", str(small_config), "--out", str(a), "--reproducible"])
    main(["report", "--config", str(small_config), "--out", str(b), "--reproducible", "--seed", "12"])
    ra = json.loads((a / "report.json").read_text())
    rb = json.loads((b / "report.json").read_text())
    assert rb["metadata"]["seeds"]["x"] == 12
    assert ra["noise_db"]["x_minus"] != rb["noise_db"]["x_minus"]


# --- sweep and fit ---------------------------------------------------------


def test_sweep_then_fit_recovers_efficiencies(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(paper_config()))
    assert main(["sweep-gain", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert len(rows) == 13
    assert main(["fit", str(tmp_path / "sweep.csv"), "--config", str(cfg), "--out", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
    p = paper_params()
    # Everything before the gain stage lumps into eta_pre, the rest into eta_post.
    assert fit["eta_pre"] == pytest.approx(p.eta_state * p.eta_opa, abs=1e-6)
    assert fit["eta_post"] == pytest.approx(p.eta_hd_eff, abs=1e-6)


def test_sweep_with_simulation(tmp_path, small_config):
    assert main(["sweep-gain", "--config", str(small_config), "--gains", "0,25", "--simulate", "--out", str(tmp_path)]) == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert [float(r["gain_db"]) for r in rows] == [0.0, 25.0]
    # Amplification protects the correlation from detection loss.
    assert float(rows[1]["sim_x_minus_db"]) < float(rows[0]["sim_x_minus_db"]) - 1.0


def test_fit_free_r0_without_config(tmp_path):
    obs = tmp_path / "obs.csv"
    gains = np.arange(0, 31, 5.0)
    y = model_db(10 ** (gains / 10), 0.7, 0.2, 1.0)
    obs.write_text("gain_db,x_minus_db\n" + "".join(f"{float(g)!r},{float(v)!r}\n" for g, v in zip(gains, y)))
    assert main(["fit", str(obs), "--r0", "1.0", "--out", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
    assert fit["eta_pre"] == pytest.approx(0.7, abs=1e-6)
    assert main(["fit", str(obs), "--free-r0", "--out", str(tmp_path)]) == 0


# --- exit codes ------------------------------------------------------------


def test_schema_error_exit_code(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"version": 1, "surprise": True}))
    assert main(["predict", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_unreachable_target_is_config_error(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"version": 1, "experiment": {"target_db": -30.0}}))
    assert main(["predict", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_missing_config_is_io_error(tmp_path):
    assert main(["predict", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 4


def test_bad_gain_list(tmp_path, small_config):
    assert main(["sweep-gain", "--config", str(small_config), "--gains", "0,abc", "--out", str(tmp_path)]) == 2


def test_empty_frames_file_is_io_error(tmp_path, round_trip):
    d = round_trip[0]
    empty = tmp_path / "empty.frm"
    empty.write_bytes(b"")
    args = ["analyze", "--x", str(empty), "--p", str(d / "sim" / "signal_p.frm"), "--shot", str(d / "sim" / "shot.frm")]
    assert main(args + ["--out", str(tmp_path)]) == 4


def test_analyze_without_frames_is_config_error(tmp_path):
    assert main(["analyze", "--out", str(tmp_path)]) == 2


def test_mismatched_rates_is_model_error(tmp_path, round_trip):
    d, _, _, _ = round_trip
    other = write_config(tmp_path / "o.json", fs_hz=128e9, n_frames=4)
    assert main(["simulate", "--config", str(other), "--out", str(tmp_path / "o")]) == 0
    args = [
        "analyze",
        "--x", str(d / "sim" / "signal_x.frm"),
        "--p", str(d / "sim" / "signal_p.frm"),
        "--shot", str(tmp_path / "o" / "shot.frm"),
        "--out", str(tmp_path / "a"),
    ]
    assert main(args) == 3


def test_fit_rank_deficient_is_model_error(tmp_path):
    obs = tmp_path / "obs.csv"
    obs.write_text("gain_db,x_minus_db\n10,-3.0\n10,-3.1\n")
    assert main(["fit", str(obs), "--r0", "1.0", "--out", str(tmp_path)]) == 3


@pytest.mark.parametrize("content", ["", "gain_db,other\n1,2\n", "gain_db,x_minus_db\n1,abc\n"])
def test_fit_bad_observations_is_io_error(tmp_path, content):
    obs = tmp_path / "obs.csv"
    obs.write_text(content)
    assert main(["fit", str(obs), "--out", str(tmp_path)]) == 4


def test_usage_error_exits_two():
    with pytest.raises(SystemExit) as info:
        main(["teleport"])
    assert info.value.code == 2

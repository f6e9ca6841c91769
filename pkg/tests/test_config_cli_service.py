import json

import numpy as np
import pytest

from flowpinn.cli import build_parser, main
from flowpinn.config import PRESETS, RunConfig, build_config, load_config, write_config
from flowpinn.errors import ConfigError

TINY = [
    "train.n_interior=120", "train.n_boundary=60", "train.n_new=40",
    "train.batch=60", "train.epochs=8", "train.adaptive_stages=2",
    "eval.grid_n=24", "eval.every=4", "eval.kl_grid=0",
    "flow.layers=2", "flow.width=8",
]


def test_presets_exist_and_validate():
    for name in ("peak2d", "twopeak2d", "hd"):
        cfg = load_config(preset=name)
        assert isinstance(cfg, RunConfig)
    assert load_config(preset="peak2d").net.width == 32
    assert load_config(preset="twopeak2d").net.width == 64
    assert load_config(preset="twopeak2d").flow.layers == 8
    assert load_config(preset="hd").flow.blocks == 3
    assert load_config(preset="hd").problem.dim == 5
    assert load_config(preset="peak2d").train.lr == pytest.approx(1e-4)


def test_override_changes_one_field():
    cfg = load_config(preset="peak2d", overrides=["train.batch=250"])
    assert cfg.train.batch == 250
    base = load_config(preset="peak2d")
    assert cfg.train.epochs == base.train.epochs
    assert cfg.net.width == base.net.width


def test_unknown_key_is_named_in_error():
    with pytest.raises(ConfigError, match="trian"):
        load_config(preset="peak2d", overrides=["trian.batch=250"])


def test_invalid_value_reports_path():
    with pytest.raises(ConfigError, match="train.batch"):
        load_config(preset="peak2d", overrides=["train.batch=-3"])


def test_flow_pool_must_be_positive():
    with pytest.raises(ConfigError, match="train.flow_pool"):
        load_config(preset="peak2d", overrides=["train.flow_pool=0"])


def test_strategy_requires_growth_size():
    doc = {"problem": {"name": "peak2d"}, "strategy": "das_g"}
    with pytest.raises(ConfigError, match="n_new"):
        build_config(doc)


def test_n_new_list_length_checked():
    doc = {"problem": {"name": "peak2d"}, "strategy": "das_g",
           "train": {"n_new": [10, 20, 30], "adaptive_stages": 2}}
    with pytest.raises(ConfigError):
        build_config(doc)


def test_config_file_roundtrip(tmp_path):
    cfg = load_config(preset="twopeak2d", overrides=["train.batch=123", "seeds=[3,4]"])
    path = tmp_path / "cfg.json"
    write_config(cfg, path)
    back = load_config(path)
    assert back == cfg


def test_config_file_overrides_preset(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"preset": "peak2d", "train": {"epochs": 7}}))
    cfg = load_config(path)
    assert cfg.train.epochs == 7
    assert cfg.net.width == PRESETS["peak2d"]["net"]["width"]


def test_missing_config_file():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/path.json")


def test_load_config_requires_a_problem():
    with pytest.raises(ConfigError, match="problem"):
        load_config()


# -- CLI ------------------------------------------------------------------------


def test_cli_invalid_strategy_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args(["run", "--strategy", "bogus", "--out", "/tmp/x"])
    assert exc.value.code != 0


def test_cli_run_writes_run_dirs(tmp_path, capsys):
    out = tmp_path / "runs"
    args = ["run", "--preset", "peak2d", "--strategy", "uniform",
            "--seeds", "0,1", "--out", str(out)]
    for o in TINY:
        args += ["--set", o]
    assert main(args) == 0
    printed = capsys.readouterr().out.strip().splitlines()
    assert len(printed) == 2
    for seed in (0, 1):
        d = out / f"uniform_seed{seed}"
        assert (d / "config.json").exists()
        assert (d / "metrics.csv").exists()
        assert (d / "net.json").exists()
        assert (d / "samples_stage_0.csv").exists()
        doc = json.loads((d / "config.json").read_text())
        assert doc["seeds"] == [seed]


def test_cli_refuses_to_overwrite_run_dir(tmp_path, capsys):
    out = tmp_path / "runs"
    args = ["run", "--preset", "peak2d", "--strategy", "uniform",
            "--seeds", "0", "--out", str(out)]
    for o in TINY:
        args += ["--set", o]
    assert main(args) == 0
    code = main(args)
    assert code == 2
    assert "refusing" in capsys.readouterr().err


def test_cli_bad_override_exit_code(tmp_path, capsys):
    code = main(["run", "--preset", "peak2d", "--set", "trian.batch=1",
                 "--out", str(tmp_path / "r")])
    assert code == 2
    assert "trian" in capsys.readouterr().err


def test_cli_compare_and_evaluate_and_diag(tmp_path, capsys):
    out = tmp_path / "runs"
    base = ["run", "--preset", "peak2d", "--seeds", "0,1", "--out", str(out)]
    extra = [x for o in TINY for x in ("--set", o)]
    assert main(base + ["--strategy", "uniform"] + extra) == 0
    assert main(base + ["--strategy", "das_r"] + extra
                + ["--set", "eval.kl_grid=24"]) == 0
    capsys.readouterr()

    dirs = [str(out / f"{s}_seed{k}") for s in ("uniform", "das_r") for k in (0, 1)]
    csv_path = tmp_path / "comparison.csv"
    assert main(["compare", *dirs, "--out", str(csv_path)]) == 0
    text = csv_path.read_text()
    assert text.startswith("strategy,stage,epoch,n_interior,loss,grid_error")
    assert "\r" not in text
    assert "das_r:" in capsys.readouterr().out

    assert main(["evaluate", dirs[0]]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["strategy"] == "uniform"

    assert main(["diag", str(out / "das_r_seed0"), "--grid", "24"]) == 0
    assert "kl=" in capsys.readouterr().out


def test_cli_compare_requires_two_dirs(tmp_path, capsys):
    assert main(["compare", str(tmp_path)]) == 2


def test_cli_evaluate_missing_dir(tmp_path, capsys):
    assert main(["evaluate", str(tmp_path / "nope")]) == 2


# -- service ---------------------------------------------------------------------


@pytest.fixture()
def client():
    from starlette.testclient import TestClient

    from flowpinn.service import app

    return TestClient(app, raise_server_exceptions=False)


def test_service_healthz_and_presets(client):
    assert client.get("/healthz").json() == {"status": "ok"}
    names = client.get("/presets").json()["presets"]
    assert names == ["hd", "peak2d", "twopeak2d"]


def test_service_run_and_followups(client, tmp_path):
    body = {"preset": "peak2d", "strategy": "rar", "seeds": [0],
            "overrides": TINY, "out": str(tmp_path)}
    resp = client.post("/runs", json=body)
    assert resp.status_code == 200
    payload = resp.json()
    assert payload["strategy"] == "rar"
    assert len(payload["runs"]) == 1
    run_dir = payload["runs"][0]["run_dir"]
    assert np.isfinite(payload["runs"][0]["final_loss"])

    ev = client.post("/evaluate", json={"run_dir": run_dir})
    assert ev.status_code == 200
    assert ev.json()["strategy"] == "rar"

    bad = client.post("/evaluate", json={"run_dir": str(tmp_path / "missing")})
    assert bad.status_code == 400

    diag = client.post("/diag", json={"run_dir": run_dir, "quad_grid": 16})
    assert diag.status_code == 400  # rar has no flow checkpoint


def test_service_bad_config_is_400(client, tmp_path):
    resp = client.post("/runs", json={"preset": "nope", "out": str(tmp_path)})
    assert resp.status_code == 400
    assert "preset" in resp.json()["detail"]


def test_service_validation_error_is_422(client):
    assert client.post("/runs", json={"preset": "peak2d"}).status_code == 422

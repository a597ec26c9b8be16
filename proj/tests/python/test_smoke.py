import json
import os
import subprocess

import pytest

import hetrisk


@pytest.fixture(scope="module")
def data():
    return hetrisk.simulate(scale=0.2, seed=21)


@pytest.fixture(scope="module")
def bank_file(data, tmp_path_factory):
    path = tmp_path_factory.mktemp("bank") / "bank.hrb"
    path.write_bytes(hetrisk.build_bank(data["training"]))
    return path


def test_simulate_is_seeded(data):
    again = hetrisk.simulate(scale=0.2, seed=21)
    assert again == data
    assert data["seed"] == 21
    assert data["training"].splitlines()[1].startswith("cohort,")


def test_strategies_and_schema():
    assert len(hetrisk.strategies()) == 6
    schema = hetrisk.factor_schema()
    assert len(schema) == 12
    assert sum(f["mandatory"] for f in schema) == 2


def test_fit_and_predict(data):
    model = hetrisk.fit("available_cases", data["training"], pattern="dre", seed=1)
    assert json.loads(model)["model"]["strategy"] == "available_cases"
    risk = hetrisk.predict_model(model, {"psa": 6.0, "age": 64, "dre": "abnormal"})
    assert 0.0 < risk < 1.0
    with pytest.raises(hetrisk.DataError):
        hetrisk.predict_model(model, {"psa": 6.0, "age": 64})


def test_validation_report(data):
    report = hetrisk.validate(
        data["training"], data["validation"], ["available_cases", "missing_indicator"], seed=3
    )
    assert report["report"] == "external_validation"
    assert [s["strategy"] for s in report["strategies"]] == ["available_cases", "missing_indicator"]
    assert all(s["auc"]["value"] > 0.5 for s in report["strategies"])


def test_bank_and_service_agree(bank_file):
    request = {"psa": 7.2, "age": 66, "dre": "normal", "volume": 38}
    direct = hetrisk.bank_predict(bank_file.read_bytes(), request)
    service = hetrisk.RiskService(bank_file)
    status, body = service.predict(request)
    assert status == 200
    assert body == direct
    assert body["pattern"]["factors"] == ["dre", "volume"]
    status, body = service.predict({"age": 66})
    assert status == 422
    assert body["fields"][0]["field"] == "psa"
    assert service.health()[1]["status"] == "ok"
    assert service.meta()[1]["pattern_count"] == 1024


def test_errors_map_to_exceptions(data):
    with pytest.raises(hetrisk.DataError):
        hetrisk.fit("nonsense", data["training"])
    with pytest.raises(hetrisk.Error):
        hetrisk.bank_predict(b"not a bank", {"psa": 1, "age": 60})


def test_auc_matches_pairs():
    assert hetrisk.auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_cli_through_module(bank_file):
    code, out, err = hetrisk.run_cli(["predict", "--bank", str(bank_file), "--psa", "5", "--age", "60"])
    assert code == 0
    assert json.loads(out)["pattern"]["mask"] == 0
    assert "seed: none" in err


@pytest.mark.skipif("HETRISK_CLI" not in os.environ, reason="CLI binary not provided")
def test_cli_binary_exit_codes(bank_file):
    cli = os.environ["HETRISK_CLI"]
    ok = subprocess.run([cli, "--help"], capture_output=True, text=True)
    assert ok.returncode == 0
    bad = subprocess.run([cli, "predict", "--bank", str(bank_file), "--age", "60"], capture_output=True, text=True)
    assert bad.returncode == 2
    assert json.loads(bad.stderr.splitlines()[-1])["error"]["kind"] == "data"

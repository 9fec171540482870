import json
import hashlib

import pytest
import yaml

from hjfront.cli import main
from hjfront.config import DEFAULTS, load_config
from hjfront.fields import ConfigError


def _write(path, obj):
    path.write_text(yaml.safe_dump(obj))
    return str(path)


def test_shipped_config_loads():
    cfg = load_config()
    assert cfg["r"] == 1.0 and cfg["eps"] == 0.1
    assert set(cfg) >= set(DEFAULTS)


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match="bogus"):
        load_config(_write(tmp_path / "c.yaml", {"grid": {"bogus": 1}}))


def test_model_r_mismatch(tmp_path):
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path / "c.yaml", {"model": "eikonal", "r": 1.0}))


def test_json_accepted(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"model": "eikonal"}))
    assert load_config(str(p))["r"] == 2.0


def test_schema_violation_exit_2(tmp_path, capsys):
    code = main(["solve", "--config", _write(tmp_path / "c.yaml", {"eps": "big"}),
                 "--out-dir", str(tmp_path / "o")])
    assert code == 2


def test_smallness_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path / "c.yaml", {"enforce_smallness": True, "eps": 0.1})
    assert main(["solve", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 2
    assert "1/100" in capsys.readouterr().err


def test_missing_noise_range_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path / "c.yaml", {"enforce_smallness": False, "noise": {"y_range": [0, 1]}})
    assert main(["solve", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 2
    assert "noise.y_range" in capsys.readouterr().err


def _digests(d):
    return json.loads((d / "manifest.json").read_text())["outputs"]


@pytest.mark.parametrize("sub", ["noise", "solve", "metric", "limit"])
def test_subcommands_write_manifest(tmp_path, sub):
    cfg = _write(tmp_path / "c.yaml", {"enforce_smallness": False,
                                       "noise": {"n_normalization": 200}})
    assert main([sub, "--config", cfg, "--out-dir", str(tmp_path / "a")]) == 0
    out = tmp_path / "a" / sub
    inv = _digests(out)
    assert inv and any(k.endswith(".png") for k in inv) and any(k.endswith(".csv") for k in inv)
    for name, digest in inv.items():
        assert hashlib.sha256((out / name).read_bytes()).hexdigest() == digest
    assert main([sub, "--config", cfg, "--out-dir", str(tmp_path / "b")]) == 0
    assert _digests(tmp_path / "b" / sub) == inv


def test_ensemble_identical_across_threads(tmp_path, monkeypatch):
    cfg = _write(tmp_path / "c.yaml", {"enforce_smallness": False,
                                       "ensemble": {"n_samples": 8}})
    assert main(["ensemble", "--config", cfg, "--out-dir", str(tmp_path / "a")]) == 0
    monkeypatch.setenv("HJFRONT_OUT_DIR", str(tmp_path / "b"))
    assert main(["ensemble", "--config", cfg, "--threads", "2"]) == 0
    assert _digests(tmp_path / "a" / "ensemble") == _digests(tmp_path / "b" / "ensemble")


def test_seed_override_changes_noise(tmp_path):
    cfg = _write(tmp_path / "c.yaml", {"noise": {"n_normalization": 200}})
    main(["noise", "--config", cfg, "--out-dir", str(tmp_path / "a")])
    main(["noise", "--config", cfg, "--out-dir", str(tmp_path / "b"), "--seed-override", "9"])
    a, b = _digests(tmp_path / "a" / "noise"), _digests(tmp_path / "b" / "noise")
    assert a["noise.csv"] != b["noise.csv"]


def test_verify_table(tmp_path, capsys):
    cfg = _write(tmp_path / "c.yaml", {"verify": {"criteria": [3, 11]}})
    assert main(["verify", "--config", cfg, "--out-dir", str(tmp_path / "o")]) == 0
    out = capsys.readouterr().out
    for i in range(1, 13):
        assert f"\n{i:>3}  " in out
    assert (tmp_path / "o" / "verify" / "verify.csv").exists()

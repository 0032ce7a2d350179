import json

import pytest

from hnno_sim.cli import main, run_verb
from hnno_sim.config import DEFAULTS, apply_overrides, config_hash, load_config, resolve
from hnno_sim.errors import ConfigurationError


def _tree(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


# --- config ---------------------------------------------------------------------


def test_defaults_resolve_unchanged():
    assert resolve() == DEFAULTS
    assert resolve() is not DEFAULTS


def test_unknown_key_reports_dotted_path():
    with pytest.raises(ConfigurationError, match=r"device\.tau_flim_us"):
        resolve({"device": {"tau_flim_us": 5.0}})


def test_type_mismatch_reports_path():
    with pytest.raises(ConfigurationError, match=r"array\.dt_us"):
        resolve({"array": {"dt_us": "fast"}})
    with pytest.raises(ConfigurationError, match=r"field\.refine"):
        resolve({"field": {"refine": 1}})


def test_section_must_be_object():
    with pytest.raises(ConfigurationError, match="readout"):
        resolve({"readout": 3})


@pytest.mark.parametrize(
    "user,path",
    [
        ({"array": {"mode": "mixed"}}, "array.mode"),
        ({"seed": -1}, "seed"),
        ({"readout": {"k": 1}}, "readout.k"),
        ({"pattern": {"features": "all"}}, "pattern.features"),
    ],
)
def test_value_checks(user, path):
    with pytest.raises(ConfigurationError, match=path.replace(".", r"\.")):
        resolve(user)


def test_partial_override_keeps_siblings():
    cfg = resolve({"device": {"tau_film_us": 2.0}})
    assert cfg["device"]["tau_film_us"] == 2.0
    assert cfg["device"]["r_x_mohm_per_um"] == DEFAULTS["device"]["r_x_mohm_per_um"]


def test_overrides():
    cfg = apply_overrides(resolve(), seed=3, mode="bypass")
    assert cfg["seed"] == 3 and cfg["array"]["mode"] == "bypass" and cfg["task"]["modes"] == ["bypass"]
    with pytest.raises(ConfigurationError):
        apply_overrides(resolve(), mode="other")


def test_hash_tracks_content():
    assert config_hash(resolve()) == config_hash(resolve())
    assert config_hash(resolve()) != config_hash(resolve({"seed": 1}))


def test_bad_json_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{"seed": 1,\n}')
    with pytest.raises(ConfigurationError, match="line 2"):
        load_config(p)
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.json")


# --- CLI ------------------------------------------------------------------------


def test_device_fit_report(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["device-fit", "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["ok"] and report["verb"] == "device-fit"
    assert report["provenance"]["config_hash"] == config_hash(report["config"])
    listed = {f["path"] for f in report["files"]}
    assert "config.json" in listed and all((out / p).exists() for p in listed)
    assert "PASS" in capsys.readouterr().out


def test_config_echo_reproduces_run(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["pattern-demo", "--out", str(a), "--seed", "5"]) == 0
    assert main(["pattern-demo", "--out", str(b), "--config", str(a / "config.json")]) == 0
    assert _tree(a) == _tree(b)


def test_rerun_is_byte_identical(tmp_path):
    cfg = resolve({"task": {"generator": {"n_clips": 60, "n_channels": 8}}, "array": {"n_nodes": 16},
                   "schedule": {"n_sample": [1, 2]}, "readout": {"k": 3}})
    run_verb("classify", cfg, tmp_path / "a")
    run_verb("classify", cfg, tmp_path / "b")
    assert _tree(tmp_path / "a") == _tree(tmp_path / "b")


def test_unknown_key_exit_code(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"device": {"bogus": 1}}))
    out = tmp_path / "run"
    assert main(["device-fit", "--config", str(cfg), "--out", str(out)]) == 2
    report = json.loads((out / "report.json").read_text())
    assert not report["ok"] and "device.bogus" in report["error"]["message"]
    assert "device.bogus" in capsys.readouterr().err


def test_zero_amplitude_fails_with_report(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"device_fit": {"amplitude_v": 0.0}}))
    out = tmp_path / "run"
    code = main(["device-fit", "--config", str(cfg), "--out", str(out)])
    assert code != 0
    report = json.loads((out / "report.json").read_text())
    assert report["error"]["type"] == "FitError"


def test_failed_check_exit_code(tmp_path):
    cfg = resolve({"device_fit": {"tau_target_us": 1.0}})
    code, report = run_verb("device-fit", cfg, tmp_path)
    assert code == 1 and not report["ok"]


def test_config_print(tmp_path, capsys):
    assert main(["config-print", "--seed", "9"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 9


def test_gen_data_manifest_loads(tmp_path):
    from hnno_sim.encoding import load_clips

    cfg = resolve({"task": {"generator": {"n_clips": 12, "n_channels": 4, "n_steps": 10}}})
    code, report = run_verb("gen-data", cfg, tmp_path)
    assert code == 0
    clips = load_clips(tmp_path / "benchmark" / "manifest.jsonl")
    assert len(clips) == 12 and report["metrics"]["n_clips"] == 12


def test_classify_from_manifest(tmp_path):
    gen = resolve({"task": {"generator": {"n_clips": 30, "n_channels": 4, "n_steps": 20, "n_classes": 3}}})
    run_verb("gen-data", gen, tmp_path / "data")
    cfg = resolve({"task": {"manifest": str(tmp_path / "data" / "benchmark" / "manifest.jsonl")},
                   "array": {"n_nodes": 8}, "readout": {"k": 3}, "schedule": {"n_sample": [1]}})
    code, report = run_verb("classify", cfg, tmp_path / "run")
    assert code in (0, 1) and report["error"] is None


def test_seizure_too_few_clips_per_class(tmp_path):
    cfg = resolve({"seizure": {"n_per_class": 3, "seconds": 3.0, "horizons_s": [1.0], "thetas": [1.0], "theta_horizon_s": 1.0}})
    code, report = run_verb("seizure-demo", cfg, tmp_path)
    assert code != 0 and report["error"]["type"] == "StratificationError"
    assert (tmp_path / "report.json").exists()

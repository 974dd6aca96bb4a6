import json
import os
import subprocess
import sys

import numpy as np
import pytest

from qccf.cli import main as cli_main
from qccf.config import DEFAULT_CONFIG, ExperimentConfig, load_config, parse_config_text
from qccf.rngs import substream
from qccf.simctl import TRACE_COLUMNS, run_experiment, run_sweep, write_trace
from qccf.wireless import WirelessConfig, sample_channels

# a small, fast configuration for orchestration tests
SMALL = dict(num_clients=4, rounds=6, feature_dim=40, num_classes=5,
             classes_per_client=2, size_mean=120, size_std=30, test_size=300)


def small_cfg(**kw):
    args = dict(SMALL)
    args.update(kw)
    return ExperimentConfig(**args)


def test_default_config_text_parses_and_validates():
    cfg = parse_config_text(DEFAULT_CONFIG)
    assert cfg.policy == "qccf"
    assert cfg.z_dim == 8010
    assert cfg.v_values  # sweep defaults present


def test_config_rejects_bad_values():
    with pytest.raises(ValueError):
        parse_config_text(DEFAULT_CONFIG.replace("policy = qccf", "policy = nonsense"))
    with pytest.raises(ValueError):
        parse_config_text(DEFAULT_CONFIG.replace("learning_rate = 0.05",
                                                 "learning_rate = 0.5"))
    with pytest.raises(ValueError):
        parse_config_text(DEFAULT_CONFIG.replace("classes_per_client = 3",
                                                 "classes_per_client = 30"))


def test_zero_rounds_trace_has_initial_row_only(tmp_path):
    res = run_experiment(small_cfg(rounds=0), out_dir=tmp_path)
    lines = (tmp_path / "trace.csv").read_text().strip().split("\n")
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) == 2  # header + initial evaluation row
    assert lines[1].startswith("0,-1,0,0,")
    assert res.final_acc == res.initial_acc


def test_trace_row_count_and_schema(tmp_path):
    cfg = small_cfg()
    run_experiment(cfg, out_dir=tmp_path)
    lines = (tmp_path / "trace.csv").read_text().strip().split("\n")
    assert len(lines) == 1 + 1 + cfg.rounds * cfg.num_clients
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["rounds"] == cfg.rounds
    assert summary["total_energy_j"] >= 0


def test_identical_seed_identical_trace_bytes(tmp_path):
    cfg = small_cfg(seed=9)
    run_experiment(cfg, out_dir=tmp_path / "a")
    run_experiment(cfg, out_dir=tmp_path / "b")
    assert (tmp_path / "a/trace.csv").read_bytes() == (tmp_path / "b/trace.csv").read_bytes()
    assert (tmp_path / "a/summary.json").read_bytes() == (tmp_path / "b/summary.json").read_bytes()


def test_worker_count_does_not_change_trace(tmp_path):
    cfg = small_cfg(seed=4)
    env_key = "QCCF_WORKERS"
    old = os.environ.get(env_key)
    try:
        os.environ[env_key] = "1"
        run_experiment(cfg, out_dir=tmp_path / "w1")
        os.environ[env_key] = "4"
        run_experiment(cfg, out_dir=tmp_path / "w4")
    finally:
        if old is None:
            os.environ.pop(env_key, None)
        else:
            os.environ[env_key] = old
    assert (tmp_path / "w1/trace.csv").read_bytes() == (tmp_path / "w4/trace.csv").read_bytes()


def test_cumulative_energy_is_exact_running_sum():
    res = run_experiment(small_cfg(seed=5))
    total = 0.0
    for rec in res.records:
        total += rec.round_energy
        assert rec.cum_energy == pytest.approx(total, rel=1e-12)


def test_energy_ledger_matches_independent_repricing():
    cfg = small_cfg(seed=6)
    res = run_experiment(cfg)
    # rebuild channel gains from the seed and re-price every logged decision
    profiles = None
    total = 0.0
    for rec in res.records:
        if profiles is None:
            from qccf.simctl import _build_profiles
            profiles = _build_profiles(cfg, res.sizes, res.distances)
        gains = sample_channels(cfg.wireless, profiles, substream(cfg.seed, f"channels:{rec.n}"))
        snr = cfg.wireless.tx_power_w * gains / (cfg.wireless.bandwidth_hz
                                                 * cfg.wireless.noise_w_per_hz)
        rates = cfg.wireless.bandwidth_hz * np.log2(1 + snr)
        for i in np.flatnonzero(rec.participation):
            prof = profiles[i]
            v = rates[i, rec.channel_of[i]]
            payload = rec.t_com[i] * rates[i, rec.channel_of[i]]
            e_com = cfg.wireless.tx_power_w * payload / v
            e_cmp = prof.energy_coeff * prof.cycles_per_epoch_set * rec.frequencies[i] ** 2
            total += e_com + e_cmp
    assert res.total_energy == pytest.approx(total, rel=1e-9)


def test_sweep_energy_ordering_and_errors(tmp_path):
    cfg = small_cfg(seed=7)
    rows = run_sweep(cfg, [20.0], out_dir=tmp_path)
    assert len(rows) == 1
    single = run_experiment(cfg.with_overrides(v_penalty=20.0))
    assert rows[0]["total_energy_j"] == pytest.approx(single.total_energy)
    with pytest.raises(ValueError):
        run_sweep(cfg, [])


def test_policy_registry_covers_config_choices():
    from qccf.policies import POLICIES
    for name in ("qccf", "no_quant", "channel_allocate", "principle", "same_size"):
        assert name in POLICIES


def _write_small_ini(path, **kw):
    text = DEFAULT_CONFIG
    rep = {
        "rounds = 200": "rounds = 4",
        "num_clients = 10": "num_clients = 3",
        "feature_dim = 800": "feature_dim = 30",
        "num_classes = 10": "num_classes = 5",
        "classes_per_client = 3": "classes_per_client = 2",
        "size_mean = 1200": "size_mean = 100",
        "size_std = 300": "size_std = 20",
        "test_size = 2000": "test_size = 200",
    }
    for old, new in rep.items():
        assert old in text
        text = text.replace(old, new)
    path.write_text(text)


def test_cli_run_roundtrip(tmp_path, capsys):
    ini = tmp_path / "cfg.ini"
    _write_small_ini(ini)
    code = cli_main(["run", "--config", str(ini), "--out", str(tmp_path / "out"),
                     "--seed", "3"])
    assert code == 0
    assert (tmp_path / "out/trace.csv").is_file()
    assert (tmp_path / "out/summary.json").is_file()


def test_cli_missing_config_is_config_error(tmp_path, capsys):
    assert cli_main(["run", "--config", str(tmp_path / "nope.ini")]) == 1


def test_cli_unknown_subcommand_usage():
    with pytest.raises(SystemExit):
        cli_main(["frobnicate"])
    assert cli_main([]) == 1


def test_cli_validate_and_oracle(tmp_path):
    ini = tmp_path / "cfg.ini"
    _write_small_ini(ini)
    assert cli_main(["validate", "--config", str(ini), "--seeds", "40",
                     "--out", str(tmp_path / "report.json")]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["theorem_ok"] and report["lemma_ok"]
    assert cli_main(["oracle", "--module", "kkt", "--trials", "100"]) == 0
    assert cli_main(["oracle", "--module", "ga", "--trials", "5"]) == 0


def test_cli_entrypoint_subprocess(tmp_path):
    ini = tmp_path / "cfg.ini"
    _write_small_ini(ini)
    proc = subprocess.run([sys.executable, "-m", "qccf.cli", "run",
                           "--config", str(ini), "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr

from wildfire_marl.cli import main


def write_config(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(
        "setup: multi_agent\nepisode_length: 20\nsummary_freq: 180\n"
        "ppo: {buffer_size: 180, batch_size: 60, hidden_units: 16, time_horizon: 10, curiosity_encoding_size: 8}\n"
    )
    return path


def test_train_eval_replay_plot(tmp_path, capsys):
    cfg = write_config(tmp_path)
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg), "--total-steps", "360", "--out", str(out)]) == 0
    ckpt = sorted((out / "checkpoints").glob("*.pt"))[-1]
    assert main(["eval", "--config", str(cfg), "--out", str(out), "--checkpoint", str(ckpt),
                 "--episodes", "1"]) == 0
    assert (out / "eval_summary.json").exists()
    assert main(["replay", "--config", str(cfg), "--out", str(out)]) == 0
    assert (out / "replay_steps.jsonl").exists()
    assert main(["plot", "--out", str(out)]) == 0
    for name in ("reward_vs_step.svg", "performance_vs_episode.svg"):
        assert (out / name).read_text().lstrip().startswith("<?xml")
    assert "fixed: reward" in capsys.readouterr().out


def test_bad_input_exits_nonzero(tmp_path, capsys):
    assert main(["train", "--setup", "greedy", "--out", str(tmp_path / "g")]) != 0
    assert main(["train", "--setup", "multi_agent", "--difficulty", "12", "--out", str(tmp_path / "x")]) != 0
    assert main(["plot", "--out", str(tmp_path / "missing")]) != 0
    assert "error" in capsys.readouterr().err

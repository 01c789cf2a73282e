import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from cognoise import io
from cognoise.cli import main, resolve, ConfigError
from cognoise.design import altruism_grid, practice_trials, session_trials
from cognoise.inference import PosteriorDraws
from cognoise.simulate import recovery_hyper, simulate_dataset

FAST_FIT = ["--chains", "2", "--warmup", "60", "--draws", "30", "--allow-diagnostic-failure"]


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if out.strip() else None), (json.loads(err) if err.strip() else None)


def test_euro_formatting():
    assert io.cents_to_eur(655) == "6.55"
    assert io.cents_to_eur(5) == "0.05"
    assert io.cents_to_eur(0) == "0.00"
    for c in (0, 1, 99, 100, 1222, 123456):
        assert io.eur_to_cents(io.cents_to_eur(c)) == c
    with pytest.raises(io.DataFormatError):
        io.eur_to_cents("6.5")


def test_trials_round_trip(tmp_path):
    for trials in (session_trials(3), session_trials(3, treatment=True), practice_trials()):
        io.write_trials(tmp_path / "t.csv", trials)
        assert io.read_trials(tmp_path / "t.csv") == trials


def test_choices_round_trip(tmp_path):
    data = simulate_dataset(recovery_hyper(), altruism_grid()[:10], 2, 2, seed=1).data
    io.write_choices(tmp_path / "c.csv", data)
    back = io.read_choices(tmp_path / "c.csv")
    for col in ("participant_id", "group", "task", "round", "self_cents", "choice"):
        assert np.array_equal(getattr(back, col), getattr(data, col))


def test_choices_rejects_bad_rows(tmp_path):
    data = simulate_dataset(recovery_hyper(), altruism_grid()[:3], 1, 1, seed=1).data
    io.write_choices(tmp_path / "c.csv", data)
    text = (tmp_path / "c.csv").read_text().replace(",B,", ",X,", 1)
    (tmp_path / "bad.csv").write_text(text)
    with pytest.raises(io.DataFormatError):
        io.read_choices(tmp_path / "bad.csv")
    (tmp_path / "empty.csv").write_text("participant_id\n")
    with pytest.raises(io.DataFormatError):
        io.read_choices(tmp_path / "empty.csv")


def test_float_table_round_trip(tmp_path):
    rows = [{"a": 0.1 + 0.2, "b": 1e-300, "c": "x"}, {"a": -3.5, "b": float("nan"), "c": "y"}]
    io.write_table(tmp_path / "f.csv", ("a", "b", "c"), rows)
    back = io.read_table(tmp_path / "f.csv")
    assert float(back[0]["a"]) == 0.1 + 0.2 and float(back[0]["b"]) == 1e-300
    assert np.isnan(float(back[1]["b"]))


def test_draws_round_trip(tmp_path):
    x = np.random.default_rng(0).normal(size=(3, 7, 5))
    d = PosteriorDraws(x, ["a", "b[0]", "omega[x,y]", "d", "e"])
    io.write_draws(tmp_path / "draws.bin", d)
    back = io.read_draws(tmp_path / "draws.bin")
    assert back.names == d.names and np.array_equal(back.draws, x)
    raw = (tmp_path / "draws.bin").read_bytes()
    (tmp_path / "cut.bin").write_bytes(raw[:-8])
    with pytest.raises(io.DataFormatError):
        io.read_draws(tmp_path / "cut.bin")
    (tmp_path / "junk.bin").write_bytes(b"x" * 40)
    with pytest.raises(io.DataFormatError):
        io.read_draws(tmp_path / "junk.bin")


def test_design_command_deterministic(tmp_path, capsys):
    for sub in ("a", "b"):
        code, out, _ = run(["design", "--seed", 4, "--out", tmp_path / sub], capsys)
        assert code == 0 and out["n_trials"] == 440
    assert (tmp_path / "a" / "trials.csv").read_bytes() == (tmp_path / "b" / "trials.csv").read_bytes()
    header = (tmp_path / "a" / "trials.csv").read_text().splitlines()[0]
    assert header.split(",") == list(io.TRIAL_COLUMNS)


def _curves(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_curves_symmetric_crossing(tmp_path, capsys):
    code, _, _ = run(["curves", "--beta", 0.5, "--mu-r", 1, "--nu-so", "0.3", "--nu-b", "0.3",
                      "--out", tmp_path], capsys)
    assert code == 0
    rows = _curves(tmp_path / "curves.csv")
    assert len(rows) == 200
    r = np.array([float(x["ratio"]) for x in rows])
    p = np.array([float(x["probability"]) for x in rows])
    assert np.all(np.diff(r) > 0) and abs(r[0] - 0.05) < 1e-12 and abs(r[-1] - 2) < 1e-12
    assert np.all(p[r < 1] < 0.5) and np.all(p[r > 1] > 0.5)
    assert float(rows[0]["indifference_ratio"]) == pytest.approx(1.0, abs=1e-15)


def test_curves_noise_panel_rows(tmp_path, capsys):
    run(["curves", "--beta", 0.3, "--mu-r", 1, "--nu-so", "0.25,0.5,1", "--nu-b", "0.25",
         "--out", tmp_path / "top"], capsys)
    top = _curves(tmp_path / "top" / "curves.csv")
    avg = [float(top[i * 200]["grid_average"]) for i in range(3)]
    assert avg[0] < avg[1] < avg[2]
    run(["curves", "--beta", 0.3, "--mu-r", 1, "--nu-so", "0.25", "--nu-b", "0.25,0.5,1",
         "--out", tmp_path / "bottom"], capsys)
    bottom = _curves(tmp_path / "bottom" / "curves.csv")
    avg = [float(bottom[i * 200]["grid_average"]) for i in range(3)]
    assert avg[0] > avg[1] > avg[2]
    stars = {bottom[i * 200]["indifference_ratio"] for i in range(3)}
    assert len(stars) == 1


def test_config_errors(tmp_path, capsys):
    code, _, err = run(["simulate", "--out", tmp_path], capsys)
    assert code == 2 and err["error"] == "config"
    code, _, err = run(["frobnicate"], capsys)
    assert code == 2
    (tmp_path / "cfg.json").write_text(json.dumps({"bogus": 1}))
    code, _, err = run(["design", "--config", tmp_path / "cfg.json"], capsys)
    assert code == 2 and "bogus" in err["message"]
    code, _, err = run(["fit", "--seed", 1, "--data", tmp_path / "missing.csv", "--out", tmp_path], capsys)
    assert code == 2


def test_data_error(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("not,a,choices,file\n1,2,3,4\n")
    code, _, err = run(["fit", "--seed", 1, "--data", tmp_path / "bad.csv", "--out", tmp_path], capsys)
    assert code == 3 and err["error"] == "data"


def test_config_file_and_threads(tmp_path):
    (tmp_path / "cfg.json").write_text(json.dumps({"seed": 9, "n_baseline": 3, "out": str(tmp_path)}))
    args = resolve(["simulate", "--config", str(tmp_path / "cfg.json"), "--n-baseline", "5"], environ={})
    assert args.seed == 9 and args.n_baseline == 5 and args.n_treatment == 40 and args.threads == 1
    args = resolve(["design"], environ={"COGNOISE_THREADS": "3"})
    assert args.threads == 3
    args = resolve(["design", "--threads", "2"], environ={"COGNOISE_THREADS": "3"})
    assert args.threads == 2
    with pytest.raises(ConfigError):
        resolve(["design"], environ={"COGNOISE_THREADS": "many"})


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    assert main(["design", "--seed", "7", "--out", str(root / "design")]) == 0
    assert main(["simulate", "--seed", "7", "--trials", str(root / "design" / "trials.csv"),
                 "--n-baseline", "4", "--n-treatment", "4", "--max-rounds", "25",
                 "--out", str(root / "sim")]) == 0
    data = root / "sim" / "choices.csv"
    codes = {}
    for v in ("altruism-full", "altruism-mu1", "altruism-nub0", "altruism-nuso0", "random-utility"):
        codes[v] = main(["fit", "--seed", "7", "--variant", v, "--data", str(data),
                         "--out", str(root / v)] + FAST_FIT)
    return root, codes


def test_pipeline_fit_outputs(pipeline):
    root, codes = pipeline
    assert set(codes.values()) == {0}
    rows = io.read_table(root / "altruism-full" / "summary.csv")
    assert rows and all(r["r_hat"] not in ("", "nan") for r in rows)
    meta = io.read_json(root / "altruism-full" / "meta.json")
    assert meta["seed"] == 7 and meta["n_records"] == 8 * 25
    diag = io.read_json(root / "altruism-full" / "diagnostics.json")
    assert "max_rhat" in diag and "mu_nu_so" in diag["parameters"]


def test_fit_rerun_byte_identical(pipeline, tmp_path):
    root, _ = pipeline
    assert main(["fit", "--seed", "7", "--variant", "altruism-full",
                 "--data", str(root / "sim" / "choices.csv"), "--out", str(tmp_path)] + FAST_FIT) == 0
    for name in ("draws.bin", "summary.csv", "meta.json", "diagnostics.json"):
        assert (tmp_path / name).read_bytes() == (root / "altruism-full" / name).read_bytes(), name


def test_fit_diagnostic_exit(pipeline, tmp_path, capsys):
    root, _ = pipeline
    code, _, err = run(["fit", "--seed", "7", "--data", root / "sim" / "choices.csv", "--chains", 2,
                        "--warmup", 5, "--draws", 10, "--out", tmp_path], capsys)
    assert code == 4 and err["error"] == "diagnostics"
    assert (tmp_path / "summary.csv").exists()


def test_compare_five_models(pipeline, tmp_path, capsys):
    root, _ = pipeline
    fits = [root / v for v in ("altruism-full", "altruism-mu1", "altruism-nub0", "altruism-nuso0",
                               "random-utility")]
    code, out, _ = run(["compare", *fits, "--out", tmp_path], capsys)
    assert code == 0
    rows = io.read_table(tmp_path / "comparison.csv")
    assert len(rows) == 5
    assert {r["model"] for r in rows} == {f.name for f in fits}
    assert float(rows[0]["d_elpd"]) == 0.0
    first = (tmp_path / "comparison.csv").read_bytes()
    run(["compare", *fits, "--out", tmp_path], capsys)
    assert (tmp_path / "comparison.csv").read_bytes() == first


def test_recover_command(pipeline, tmp_path, capsys):
    root, _ = pipeline
    code, out, _ = run(["recover", "--truth", root / "sim" / "truth.json", "--fit", root / "altruism-full",
                        "--out", tmp_path], capsys)
    assert code == 0 and out["hyper_means_total"] == 6
    rep = io.read_json(tmp_path / "coverage.json")
    assert len(rep["rows"]) == 6 + 4 + 6


def test_report(pipeline, tmp_path, capsys):
    root, _ = pipeline
    run(["report", "--fit", root / "altruism-full", "--out", tmp_path], capsys)
    text = (tmp_path / "report.md").read_text()
    assert "P(nu_so_T > nu_so_B)" in text and "P(mu_r < 1)" in text and "P(delta_T > delta_B)" in text
    assert "alpha_B" in text and "rho(nu_so, nu_b)" in text
    first = (tmp_path / "report.md").read_bytes()
    run(["report", "--fit", root / "altruism-full", "--out", tmp_path], capsys)
    assert (tmp_path / "report.md").read_bytes() == first
    run(["report", "--fit", root / "altruism-full", "--no-default-statements", "--out", tmp_path / "bare"],
        capsys)
    bare = (tmp_path / "bare" / "report.md").read_text()
    assert "P(" not in bare and "| mu_nu_so |" in bare


def test_console_script_exit_code(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "cognoise.cli", "simulate", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr)["error"] == "config"

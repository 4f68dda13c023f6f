import csv
import json
import os

import numpy as np
import pytest

from bsim.archive import load_archive, save_archive
from bsim.cli import SCORE_HEADER, fmt, main, write_csv
from bsim.data import ingest
from bsim.inference import summarize

SYNTH_CFG = """
n = 160
p = 3
family = bernoulli
g_star = sine
amplitude = 2.0
seed = 3
"""

FIT_CFG = """
input = {input}
outcome = y
arm = a
id_col = id
index_cols = x1, x2, x3
family = bernoulli
n_basis = 6
lambda_prior = 100
n_iter = 120
burn_in = 40
thin = 2
n_chains = 2
seed = 11
"""


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "synth.cfg").write_text(SYNTH_CFG)
    assert main(["synth", "--config", str(root / "synth.cfg"), "--out", str(root / "data")]) == 0
    (root / "fit.cfg").write_text(FIT_CFG.format(input=root / "data" / "dataset.csv"))
    assert main(["fit", "--config", str(root / "fit.cfg"), "--out", str(root / "run1")]) == 0
    return root


def test_synth_outputs(workspace):
    data = read_rows(workspace / "data" / "dataset.csv")
    assert data[0] == ["id", "y", "a", "x1", "x2", "x3"] and len(data) == 161
    truth = read_rows(workspace / "data" / "truth.csv")
    assert truth[0] == ["id", "index_value", "true_delta"] and len(truth) == 161
    meta = json.loads((workspace / "data" / "scenario.json").read_text())
    assert meta["n"] == 160 and abs(np.linalg.norm(meta["beta_star"]) - 1) < 1e-12


def test_fit_artifacts(workspace):
    out = workspace / "run1"
    for name in ("draws.bin", "coefficients.csv", "subject_scores.csv", "figure_left.csv",
                 "figure_right.csv", "run.json"):
        assert (out / name).exists()
    scores = read_rows(out / "subject_scores.csv")
    assert scores[0] == SCORE_HEADER and len(scores) == 161
    coef = read_rows(out / "coefficients.csv")
    assert [r[0] for r in coef[1:]] == ["beta"] * 3 + ["m"] * 4
    assert len(read_rows(out / "figure_left.csv")) == 202
    run = json.loads((out / "run.json").read_text())
    assert run["n"] == 160 and 0 <= run["acceptance_rate"] <= 1
    assert run["config"]["lambda_prop"] == 300.0  # defaults are recorded
    assert set(run["timings_seconds"]) == {"initialization", "sampling", "summaries", "total"}


def test_decision_consistency_across_files(workspace):
    scores = read_rows(workspace / "run1" / "subject_scores.csv")
    right = read_rows(workspace / "run1" / "figure_right.csv")
    h = scores[0]
    for s, r in zip(scores[1:], right[1:]):
        tbi = float(s[h.index("tbi")])
        assert s[h.index("decision")] == str(int(tbi > 0.5))
        assert s[h.index("n_delta_negative")] == s[h.index("n_exp_delta_below_one")]
        assert s[0] == r[0] and float(r[2]) == tbi


def test_fit_is_byte_identical(workspace):
    assert main(["fit", "--config", str(workspace / "fit.cfg"), "--out", str(workspace / "run2")]) == 0
    for name in ("coefficients.csv", "subject_scores.csv", "figure_left.csv", "figure_right.csv"):
        assert (workspace / "run1" / name).read_bytes() == (workspace / "run2" / name).read_bytes()


def test_seed_flag_changes_draws(workspace):
    assert main(["fit", "--config", str(workspace / "fit.cfg"), "--seed", "12",
                 "--out", str(workspace / "run3")]) == 0
    assert (workspace / "run1" / "coefficients.csv").read_bytes() != \
        (workspace / "run3" / "coefficients.csv").read_bytes()
    assert json.loads((workspace / "run3" / "run.json").read_text())["seed"] == 12


def test_archive_round_trip_reproduces_coefficients(workspace, tmp_path):
    model = load_archive(workspace / "run1" / "draws.bin")
    cfg = model.header["config"]
    ds, _ = ingest(cfg["input"], "y", "a", model.main_cols, model.index_cols, "id")
    summary = summarize(model.draws, ds, model.system, model.family)
    path = tmp_path / "coefficients.csv"
    write_csv(path, ["block", "name", "mean", "lower", "upper"], summary.coefficients)
    assert path.read_bytes() == (workspace / "run1" / "coefficients.csv").read_bytes()
    # saving the reloaded archive gives the same file
    save_archive(tmp_path / "again.bin", model.draws, model.system, model.family,
                 {k: v for k, v in model.header.items()})
    assert (tmp_path / "again.bin").read_bytes() == (workspace / "run1" / "draws.bin").read_bytes()


def test_score_training_file_is_idempotent(workspace, tmp_path):
    assert main(["score", "--model", str(workspace / "run1" / "draws.bin"),
                 "--data", str(workspace / "data" / "dataset.csv"), "--out", str(tmp_path)]) == 0
    got = read_rows(tmp_path / "scores.csv")
    want = read_rows(workspace / "run1" / "subject_scores.csv")
    assert got[0] == want[0] and len(got) == len(want)
    for g, w in zip(got[1:], want[1:]):
        assert g[0] == w[0]
        for a, b in zip(g[1:], w[1:]):
            try:
                assert float(a) == pytest.approx(float(b), abs=1e-12)
            except ValueError:
                assert a == b


def test_score_extrapolated_row(workspace, tmp_path):
    path = tmp_path / "new.csv"
    path.write_text("id,x1,x2,x3\nfar,40,40,40\nnear,0,0,0\n")
    assert main(["score", "--model", str(workspace / "run1" / "draws.bin"), "--data", str(path),
                 "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "scores.csv")
    col = rows[0].index("extrapolated")
    assert rows[1][col] == "true" and rows[2][col] == "false"


def test_score_empty_file(workspace, tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    assert main(["score", "--model", str(workspace / "run1" / "draws.bin"), "--data", str(path),
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "scores.csv").read_text() == ",".join(SCORE_HEADER) + "\n"
    path.write_text("id,x1,x2,x3\n")
    assert main(["score", "--model", str(workspace / "run1" / "draws.bin"), "--data", str(path),
                 "--out", str(tmp_path)]) == 0
    assert len(read_rows(tmp_path / "scores.csv")) == 1


def test_score_schema_mismatch(workspace, tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("id,x1,x2\n1,0,0\n")
    assert main(["score", "--model", str(workspace / "run1" / "draws.bin"), "--data", str(path),
                 "--out", str(tmp_path)]) == 2


def test_exit_codes(workspace, tmp_path):
    assert main(["fit", "--config", str(tmp_path / "missing.cfg")]) == 1
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["fit"])
    assert exc.value.code == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_key = 1\n")
    assert main(["fit", "--config", str(bad)]) == 1
    nodata = tmp_path / "nodata.cfg"
    nodata.write_text(FIT_CFG.format(input=tmp_path / "absent.csv"))
    assert main(["fit", "--config", str(nodata), "--out", str(tmp_path / "o")]) == 2
    badarm = tmp_path / "arm.csv"
    badarm.write_text("id,y,a,x1,x2,x3\n1,1,2,0,0,0\n2,0,0,1,1,1\n")
    cfg = tmp_path / "arm.cfg"
    cfg.write_text(FIT_CFG.format(input=badarm))
    assert main(["fit", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    family = tmp_path / "fam.cfg"
    family.write_text(FIT_CFG.format(input=workspace / "data" / "dataset.csv") + "family = gamma\n")
    assert main(["fit", "--config", str(family), "--out", str(tmp_path / "o")]) == 1
    assert main(["score", "--model", str(tmp_path / "arm.csv"), "--data", str(badarm),
                 "--out", str(tmp_path)]) == 2


def test_fmt():
    assert fmt(True) == "true" and fmt(np.bool_(False)) == "false"
    assert fmt(3) == "3" and fmt(np.int64(7)) == "7"
    assert fmt(0.1) == "0.10000000000000001"
    assert float(fmt(np.pi)) == np.pi
    assert fmt("abc") == "abc"


def test_synth_defaults(tmp_path):
    assert main(["synth", "--seed", "2", "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "scenario.json").read_text())
    assert meta["seed"] == 2 and meta["n"] == 1000 and meta["p"] == 5
    assert os.path.getsize(tmp_path / "dataset.csv") > 0

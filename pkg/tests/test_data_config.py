import logging

import numpy as np
import pytest

from bsim.config import ConfigError, config_hash, defaults, load_config, parse_config
from bsim.data import INTERCEPT, ingest, make_dataset
from bsim.errors import DataError


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


CSV = "id,y,a,x1,x2\nr1,1,0,0.5,1.0\nr2,0,1,-0.5,2.0\nr3,1,1,1.5,-1.0\nr4,0,0,0.1,0.2\n"


def test_ingest_basic(tmp_path):
    ds, dropped = ingest(_write(tmp_path, CSV), "y", "a", ["x1", "x2"], ["x2"], "id")
    assert dropped == 0 and ds.n == 4
    assert ds.main_names == [INTERCEPT, "x1", "x2"] and ds.index_names == ["x2"]
    np.testing.assert_array_equal(ds.X_main[:, 0], 1.0)
    np.testing.assert_array_equal(ds.X_index[:, 0], [1.0, 2.0, -1.0, 0.2])
    assert ds.ids == ["r1", "r2", "r3", "r4"]
    assert (ds.pi0, ds.pi1) == (0.5, 0.5)


def test_missing_cell_drops_one_row(tmp_path, caplog):
    text = CSV.replace("r2,0,1,-0.5,2.0", "r2,0,1,NA,2.0")
    with caplog.at_level(logging.WARNING):
        ds, dropped = ingest(_write(tmp_path, text), "y", "a", ["x1"], ["x2"])
    assert dropped == 1 and ds.n == 3
    assert "dropped 1 row" in caplog.text


def test_missing_cell_in_unused_column_is_kept(tmp_path):
    text = CSV.replace("r2,0,1,-0.5,2.0", "r2,0,1,,2.0")
    ds, dropped = ingest(_write(tmp_path, text), "y", "a", ["x2"], ["x2"])
    assert dropped == 0 and ds.n == 4


def test_bad_arm_names_row(tmp_path):
    text = CSV.replace("r3,1,1", "r3,1,2")
    with pytest.raises(DataError, match="row 4"):
        ingest(_write(tmp_path, text), "y", "a", ["x1"], ["x2"])


def test_missing_column(tmp_path):
    with pytest.raises(DataError, match="x9"):
        ingest(_write(tmp_path, CSV), "y", "a", ["x9"], ["x2"])


def test_non_numeric_value(tmp_path):
    with pytest.raises(DataError):
        ingest(_write(tmp_path, CSV.replace("0.5", "abc")), "y", "a", ["x1"], ["x2"])


def test_single_arm_rejected(tmp_path):
    text = "y,a,x\n1,1,0.1\n0,1,0.3\n"
    with pytest.raises(DataError, match="both"):
        ingest(_write(tmp_path, text), "y", "a", ["x"], ["x"])


def test_all_rows_incomplete(tmp_path):
    text = "y,a,x\n1,1,\n0,0,NA\n"
    with pytest.raises(DataError, match="no complete"):
        ingest(_write(tmp_path, text), "y", "a", ["x"], ["x"])


def test_empty_file(tmp_path):
    path = _write(tmp_path, "")
    with pytest.raises(DataError):
        ingest(path, "y", "a", ["x"], ["x"])
    ds, _ = ingest(path, "y", "a", ["x"], ["x"], require_trial=False)
    assert ds.n == 0 and ds.y is None


def test_prediction_only_file(tmp_path):
    ds, _ = ingest(_write(tmp_path, "x1,x2\n1,2\n3,4\n"), "y", "a", ["x1"], ["x1", "x2"],
                   require_trial=False, pi=(0.4, 0.6))
    assert ds.y is None and ds.a is None and ds.n == 2 and ds.pi1 == 0.6


def test_make_dataset_defaults():
    ds = make_dataset([1, 0, 1, 0], [0, 1, 1, 0], np.arange(8.0).reshape(4, 2))
    assert ds.p == 2 and ds.p_main == 3 and ds.pi1 == 0.5
    assert ds.index_names == ["x1", "x2"] and ds.main_names == [INTERCEPT, "x1", "x2"]
    ds2 = make_dataset([1, 0], [0, 1], np.eye(2), X_main=np.ones((2, 1)), add_intercept=False)
    assert ds2.main_names == ["z1"]


def test_dataset_rejects_duplicate_names():
    with pytest.raises(DataError):
        make_dataset([1, 0], [0, 1], np.eye(2), index_names=["x", "x"])


def test_check_trial_codes():
    with pytest.raises(DataError):
        make_dataset([1, 0], [0, 3], np.eye(2), pi=(0.5, 0.5)).check_trial()
    with pytest.raises(DataError):
        make_dataset(None, None, np.eye(2), pi=(0.5, 0.5)).check_trial()


def test_parse_config():
    cfg = parse_config("""
        # comment
        input = trial.csv
        main_cols = age, sex ,o2
        index_cols = o2
        n_iter = 100   # trailing comment
        beta0 = 1, 0, 0
        standardize = no
        pi_override = 0.3
    """)
    assert cfg["input"] == "trial.csv"
    assert cfg["main_cols"] == ["age", "sex", "o2"]
    assert cfg["n_iter"] == 100 and cfg["beta0"] == [1.0, 0.0, 0.0]
    assert cfg["standardize"] is False and cfg["pi_override"] == [0.3]
    assert cfg["lambda_prop"] == 300.0 and cfg["burn_in"] == 2000


@pytest.mark.parametrize("text", ["bogus = 1", "n_iter = ten", "no equals sign", "standardize = maybe"])
def test_parse_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_config_defaults_and_hash(tmp_path):
    d = defaults()
    assert d["n_chains"] == 4 and d["thin"] == 2 and d["beta0"] == "auto"
    assert config_hash(d) == config_hash(defaults())
    d2 = defaults()
    d2["seed"] = 1
    assert config_hash(d) != config_hash(d2)
    path = tmp_path / "c.cfg"
    path.write_text("seed = 5\n")
    assert load_config(str(path))["seed"] == 5

"""Command line interface: ``bsim fit | score | synth``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import __version__
from .archive import load_archive, save_archive
from .config import ConfigError, config_hash, defaults, load_config
from .data import ingest
from .errors import DataError, DomainError, NumericalError
from .expfam import Family
from .inference import score_subjects, summarize
from .iwls import rho_grid
from .priors import HyperParameters
from .sampler import ChainConfig, initialize, run_chain
from .synth import Scenario, generate, random_unit, true_delta

log = logging.getLogger("bsim")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

SCORE_HEADER = ["id", "index_value", "tbi", "decision", "decision_mean_rule",
                "pred_mean_arm0", "pred_mean_arm1", "delta_mean", "delta_lower", "delta_upper",
                "n_delta_negative", "n_exp_delta_below_one", "n_draws", "extrapolated"]


def fmt(value) -> str:
    """Fixed rendering for CSV cells: 17 significant digits for floats."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def score_rows(subjects):
    for s in subjects:
        yield (s.subject_id, s.index_value, s.tbi, s.decision, s.decision_mean_rule,
               s.pred_mean_arm0, s.pred_mean_arm1, s.delta_mean, s.cri_delta[0], s.cri_delta[1],
               s.n_delta_negative, s.n_exp_delta_below_one, s.n_draws, s.extrapolated)


# --------------------------------------------------------------------------
# fit


def _columns(cfg):
    index_cols = list(cfg["index_cols"])
    if not index_cols:
        raise ConfigError("index_cols must list at least one column")
    main_cols = list(cfg["main_cols"]) or list(index_cols)
    return main_cols, index_cols


def _checked(build, *args):
    """Call ``build``; plain ValueErrors from configuration values become ConfigError."""
    try:
        return build(*args)
    except (DataError, DomainError):
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _pi_override(values):
    if values is None:
        return None
    if len(values) == 1:
        return (1.0 - values[0], values[0])
    if len(values) == 2:
        return tuple(values)
    raise ConfigError("pi_override takes pi1 or 'pi0, pi1'")


def fit_run(cfg: dict, out_dir: str) -> dict:
    """Fit the model described by ``cfg`` and write all artifacts to ``out_dir``."""
    t0 = time.perf_counter()
    if not cfg["input"]:
        raise ConfigError("config key 'input' is required for fit")
    main_cols, index_cols = _columns(cfg)
    family = _checked(Family, cfg["family"])
    grid = _checked(rho_grid, cfg["rho_grid_min"], cfg["rho_grid_max"], cfg["rho_grid_points"])
    chain_cfg = _checked(ChainConfig, cfg["n_iter"], cfg["burn_in"], cfg["thin"], cfg["seed"],
                         cfg["n_chains"], cfg["workers"])
    dataset, dropped = ingest(cfg["input"], cfg["outcome"], cfg["arm"], main_cols, index_cols,
                              cfg["id_col"] or None, _pi_override(cfg["pi_override"]))
    beta0 = None if cfg["beta0"] == "auto" else np.asarray(cfg["beta0"], dtype=float)
    if beta0 is not None:
        if beta0.shape != (dataset.p,) or not np.linalg.norm(beta0) > 0:
            raise ConfigError(f"beta0 needs {dataset.p} values, not all zero")
        beta0 = beta0 / np.linalg.norm(beta0)

    init = initialize(dataset, family, cfg["n_basis"], cfg["knot_padding"], grid, beta0,
                      cfg["scoring_tol"], cfg["scoring_max_iter"])
    t_init = time.perf_counter()
    if beta0 is None:
        beta0 = init.beta_linear if init.beta_linear @ init.state.beta >= 0 else -init.beta_linear
    hyper = _checked(HyperParameters.default, beta0, dataset.p_main, cfg["lambda_prior"],
                     cfg["lambda_prop"], cfg["m_prior_sd"], init.rho)
    if cfg["proposal_anchor"] not in ("current", "mode"):
        raise ConfigError("proposal_anchor must be 'current' or 'mode'")
    draws = run_chain(dataset, init.family, hyper, init.system, chain_cfg, init.state,
                      cfg["scoring_tol"], cfg["scoring_max_iter"], cfg["proposal_anchor"])
    t_chain = time.perf_counter()
    summary = summarize(draws, dataset, init.system, init.family)
    t_summary = time.perf_counter()

    os.makedirs(out_dir, exist_ok=True)
    chash = config_hash(cfg)
    header = {
        "config": cfg, "config_hash": chash, "seed": cfg["seed"], "version": __version__,
        "main_cols": main_cols, "index_cols": index_cols, "id_col": cfg["id_col"],
        "rho": init.rho, "diagnostics": draws.diagnostics,
    }
    save_archive(os.path.join(out_dir, "draws.bin"), draws, init.system, init.family, header)
    write_csv(os.path.join(out_dir, "coefficients.csv"), ["block", "name", "mean", "lower", "upper"],
              summary.coefficients)
    write_csv(os.path.join(out_dir, "subject_scores.csv"), SCORE_HEADER, score_rows(summary.subjects))
    write_csv(os.path.join(out_dir, "figure_left.csv"),
              ["u", "exp_delta_mean", "exp_delta_lower", "exp_delta_upper"], summary.figure_left)
    write_csv(os.path.join(out_dir, "figure_right.csv"),
              ["id", "index_value", "tbi", "exp_delta_mean", "exp_delta_lower", "exp_delta_upper"],
              summary.figure_right)

    run = {
        "version": __version__,
        "config": cfg,
        "config_hash": chash,
        "seed": cfg["seed"],
        "n": dataset.n,
        "dropped_rows": dropped,
        "family": init.family.kind,
        "dispersion": init.family.dispersion,
        "rho": init.rho,
        "beta0": [float(v) for v in beta0],
        "initialization": {
            "beta": [float(v) for v in init.state.beta],
            "outer_iterations": init.iterations,
            "converged": init.converged,
        },
        "knots": [float(v) for v in init.system.knots],
        "acceptance_rate": draws.acceptance_rate,
        "chain_acceptance": [float(v) for v in draws.chain_acceptance],
        "diagnostics": draws.diagnostics,
        "n_draws": len(draws),
        "timings_seconds": {
            "initialization": t_init - t0,
            "sampling": t_chain - t_init,
            "summaries": t_summary - t_chain,
            "total": time.perf_counter() - t0,
        },
    }
    with open(os.path.join(out_dir, "run.json"), "w") as fh:
        json.dump(run, fh, indent=2, sort_keys=True)
    return run


# --------------------------------------------------------------------------
# score


def score_run(model_path: str, data_path: str, out_dir: str) -> int:
    """Score new rows with a fitted archive; returns the number of rows written."""
    model = load_archive(model_path)
    cfg = model.header["config"]
    dataset, _ = ingest(data_path, cfg["outcome"], cfg["arm"], model.main_cols, model.index_cols,
                        model.header.get("id_col") or None, (model.system.pi0, model.system.pi1),
                        require_trial=False)
    subjects = score_subjects(dataset.X_main, dataset.X_index, dataset.ids, model.draws,
                              model.system, model.family)
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, "scores.csv"), SCORE_HEADER, score_rows(subjects))
    return len(subjects)


# --------------------------------------------------------------------------
# synth


def scenario_from_config(cfg: dict) -> Scenario:
    rng = np.random.default_rng([cfg["seed"], 1])
    p = cfg["p"]
    if cfg["beta_star"] == "auto":
        beta_star = random_unit(p, rng)
    else:
        beta_star = np.asarray(cfg["beta_star"], dtype=float)
        if beta_star.shape != (p,) or not np.linalg.norm(beta_star) > 0:
            raise ConfigError(f"beta_star needs {p} values, not all zero")
        beta_star = beta_star / np.linalg.norm(beta_star)
    m_star = np.zeros(p) if cfg["m_star"] == "auto" else np.asarray(cfg["m_star"], dtype=float)
    if m_star.shape != (p,):
        raise ConfigError(f"m_star needs {p} values")
    try:
        return Scenario(cfg["n"], p, beta_star, m_star, cfg["family"], cfg["pi1"], cfg["g_star"],
                        cfg["amplitude"], cfg["intercept"], cfg["noise_sd"], cfg["standardize"],
                        cfg["seed"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def synth_run(cfg: dict, out_dir: str) -> Scenario:
    """Write ``dataset.csv``, ``truth.csv`` and ``scenario.json``."""
    scenario = scenario_from_config(cfg)
    data = generate(scenario)
    os.makedirs(out_dir, exist_ok=True)
    names = data.index_names
    rows = ((data.ids[i], float(data.y[i]), int(data.a[i]), *map(float, data.X_index[i]))
            for i in range(data.n))
    write_csv(os.path.join(out_dir, "dataset.csv"), ["id", "y", "a", *names], rows)
    index = data.X_index @ scenario.beta_star
    delta = true_delta(scenario, data.X_index)
    write_csv(os.path.join(out_dir, "truth.csv"), ["id", "index_value", "true_delta"],
              ((data.ids[i], float(index[i]), float(delta[i])) for i in range(data.n)))
    meta = {
        "n": scenario.n, "p": scenario.p, "family": scenario.family, "pi1": scenario.pi1,
        "beta_star": [float(v) for v in scenario.beta_star],
        "m_star": [float(v) for v in scenario.m_star], "intercept": scenario.intercept,
        "g_star": scenario.g_star, "amplitude": scenario.amplitude, "noise_sd": scenario.noise_sd,
        "seed": scenario.seed, "columns": names,
    }
    with open(os.path.join(out_dir, "scenario.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
    return scenario


# --------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bsim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bsim {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress messages")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit the model and write posterior summaries")
    fit.add_argument("--config", required=True, help="key = value configuration file")
    fit.add_argument("--seed", type=int, help="overrides the config seed")
    fit.add_argument("--out", help="output directory (overrides the config)")

    score = sub.add_parser("score", help="score new covariate rows with a fitted archive")
    score.add_argument("--model", required=True, help="draws.bin written by fit")
    score.add_argument("--data", required=True, help="CSV with the fitted covariate columns")
    score.add_argument("--out", default=".", help="output directory for scores.csv")
    score.add_argument("--config", help="accepted for symmetry; the archive carries the config")
    score.add_argument("--seed", type=int, help="ignored (scoring is deterministic)")

    synth = sub.add_parser("synth", help="simulate a randomized trial")
    synth.add_argument("--config", help="key = value configuration file (defaults if omitted)")
    synth.add_argument("--seed", type=int, help="overrides the config seed")
    synth.add_argument("--out", help="output directory (overrides the config)")
    return parser


def _load(args) -> dict:
    try:
        cfg = load_config(args.config) if args.config else defaults()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "out", None):
        cfg["out"] = args.out
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "fit":
            cfg = _load(args)
            run = fit_run(cfg, cfg["out"])
            log.info("fit done: acceptance %.3f, %d draws", run["acceptance_rate"], run["n_draws"])
        elif args.command == "score":
            n = score_run(args.model, args.data, args.out)
            log.info("scored %d rows", n)
        else:
            cfg = _load(args)
            synth_run(cfg, cfg["out"])
    except ConfigError as exc:
        print(f"bsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DomainError, OSError) as exc:
        print(f"bsim: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"bsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

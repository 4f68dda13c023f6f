"""Flat ``key = value`` run configuration.

Syntax: one ``key = value`` per line, ``#`` starts a comment, lists are
comma separated.  Unknown keys are rejected.  Example::

    input = trial.csv
    outcome = y
    arm = a
    main_cols = age, sex, o2
    index_cols = o2, age
    family = bernoulli
    n_iter = 5000
"""

from __future__ import annotations

import hashlib
import json

from .errors import BsimError


class ConfigError(BsimError, ValueError):
    """Malformed or inconsistent configuration."""


def _strlist(text):
    return [s.strip() for s in text.split(",") if s.strip()]


def _floatlist(text):
    return [float(s) for s in _strlist(text)]


def _auto_or_floats(text):
    return "auto" if text.strip().lower() in ("auto", "") else _floatlist(text)


def _optional_floats(text):
    return None if text.strip().lower() in ("", "none", "auto") else _floatlist(text)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default)
SCHEMA = {
    # data
    "input": (str, ""),
    "out": (str, "out"),
    "outcome": (str, "y"),
    "arm": (str, "a"),
    "main_cols": (_strlist, []),
    "index_cols": (_strlist, []),
    "id_col": (str, ""),
    "family": (str, "bernoulli"),
    # spline
    "n_basis": (int, 8),
    "knot_padding": (float, 0.05),
    "pi_override": (_optional_floats, None),
    # iwls / gcv
    "rho_grid_min": (float, 1e-4),
    "rho_grid_max": (float, 1e4),
    "rho_grid_points": (int, 25),
    "scoring_tol": (float, 1e-8),
    "scoring_max_iter": (int, 50),
    # priors
    "lambda_prior": (float, 300.0),
    "lambda_prop": (float, 300.0),
    "beta0": (_auto_or_floats, "auto"),
    "m_prior_sd": (float, 10.0),
    "proposal_anchor": (str, "current"),
    # chain
    "n_iter": (int, 5000),
    "burn_in": (int, 2000),
    "thin": (int, 2),
    "n_chains": (int, 4),
    "seed": (int, 0),
    "workers": (int, 1),
    # synth
    "n": (int, 1000),
    "p": (int, 5),
    "pi1": (float, 0.5),
    "intercept": (float, 0.0),
    "m_star": (_auto_or_floats, "auto"),
    "beta_star": (_auto_or_floats, "auto"),
    "g_star": (str, "sine"),
    "amplitude": (float, 2.0),
    "noise_sd": (float, 1.0),
    "standardize": (_bool, True),
}


def defaults() -> dict:
    return {k: (list(v) if isinstance(v, list) else v) for k, (_, v) in SCHEMA.items()}


def parse_config(text: str) -> dict:
    cfg = defaults()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        parser = SCHEMA[key][0]
        try:
            cfg[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    return cfg


def load_config(path) -> dict:
    with open(path) as fh:
        return parse_config(fh.read())


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()

"""Binary archive of posterior draws and the fitted spline system.

Layout::

    b"BSIMDRAW"            8-byte magic
    uint32 little-endian    format version
    uint64 little-endian    header length in bytes
    header                  UTF-8 JSON (sorted keys)
    arrays                  ``.npy`` records in ARRAY_ORDER

The header holds the run configuration, its hash, the seed, the family,
the spline system and the column names needed to score new data.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .expfam import Family
from .sampler import PosteriorDraws
from .spline import SplineSystem

MAGIC = b"BSIMDRAW"
VERSION = 1
ARRAY_ORDER = ("m", "beta", "gamma", "gamma_tilde", "chain", "chain_acceptance",
               "beta_reference", "knots", "Z")


@dataclass
class FittedModel:
    draws: PosteriorDraws
    system: SplineSystem
    family: Family
    header: dict

    @property
    def main_cols(self):
        return self.header["main_cols"]

    @property
    def index_cols(self):
        return self.header["index_cols"]


def _npy_bytes(arr) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def save_archive(path, draws: PosteriorDraws, system: SplineSystem, family: Family, header: dict):
    """Write the archive; ``header`` must be JSON serialisable."""
    meta = dict(header)
    meta.update({
        "family": family.kind,
        "dispersion": family.dispersion,
        "degree": system.degree,
        "pi0": system.pi0,
        "pi1": system.pi1,
        "acceptance_rate": draws.acceptance_rate,
        "align_sign": draws.align_sign,
        "n_draws": len(draws),
    })
    arrays = {
        "m": draws.m, "beta": draws.beta, "gamma": draws.gamma, "gamma_tilde": draws.gamma_tilde,
        "chain": draws.chain.astype(np.int64), "chain_acceptance": draws.chain_acceptance,
        "beta_reference": draws.beta_reference if draws.beta_reference is not None
        else np.zeros(0), "knots": system.knots, "Z": system.Z,
    }
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", VERSION, len(blob)))
        fh.write(blob)
        for name in ARRAY_ORDER:
            fh.write(_npy_bytes(np.asarray(arrays[name], dtype=np.int64 if name == "chain" else float)))


def load_archive(path) -> FittedModel:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise DataError(f"{path}: not a draws archive")
        version, size = struct.unpack("<IQ", fh.read(12))
        if version != VERSION:
            raise DataError(f"{path}: unsupported archive version {version}")
        header = json.loads(fh.read(size).decode())
        arrays = {name: np.lib.format.read_array(fh, allow_pickle=False) for name in ARRAY_ORDER}
    system = SplineSystem(arrays["knots"], int(header["degree"]), float(header["pi0"]),
                          float(header["pi1"]), arrays["Z"])
    family = Family(header["family"], float(header["dispersion"]))
    ref = arrays["beta_reference"]
    draws = PosteriorDraws(arrays["m"], arrays["beta"], arrays["gamma"], arrays["gamma_tilde"],
                           arrays["chain"], float(header["acceptance_rate"]),
                           arrays["chain_acceptance"], header.get("diagnostics", {}),
                           ref if ref.size else None, bool(header["align_sign"]))
    return FittedModel(draws, system, family, header)

"""Configuration, data ingestion and draw-store persistence."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import yaml

from .model import Dataset, build_free_entry_map, deterministic_terms
from .priors import HyperParameters, default_omega_gamma
from .sampler import ChainConfig, DrawStore

try:
    from importlib.metadata import version as _pkg_version

    VERSION = _pkg_version("artifact")
except Exception:  # pragma: no cover - running from a source tree
    VERSION = "0.1.0"

STORE_FORMAT = 1

DEFAULT_CONFIG = {
    "data": {
        "path": None,
        "date_column": None,
        "series": None,
        "log": [],
    },
    "model": {
        "lag_order": 2,
        "rank": 1,
        "constant": "unrestricted",
        "trend": "none",
        "seasonal": 0,
        "season_start": 0,
        "zero_restrictions": [],
    },
    "prior": {
        "alpha_scale": 0.1,
        "beta_scale": None,  # None means 1 / n_tilde
        "gamma_scale": 0.5,
        "deterministic_scale": 0.5,
        "b_mean": 0.0,
        "b_scale": 1.0,
        "nu_b_shape": 3.0,
        "nu_b_scale": 2.0,
        "lambda_shape": 1.0,
        "s_shape": 1.0,
        "s_scale": 1.0,
        "trans_c": 1.0,
        "trans_d": 1.0,
    },
    "identification": {
        "ordering": "ascending",
        "state_id_index": 0,
    },
    "sampler": ChainConfig().to_dict(),
    "selection": {
        "ranks": None,
        "method": "conditional",
    },
    "analysis": {
        "horizon": 40,
        "hpd_level": 0.95,
    },
}


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        path = f"{where}.{key}" if where else key
        if key not in base:
            raise ConfigError(f"unknown config key {path!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {path!r} must be a mapping")
            out[key] = _merge(base[key], val, path)
        else:
            out[key] = val
    return out


def load_config(path=None, overrides: Optional[dict] = None) -> dict:
    """Defaults merged with a YAML file and then ``overrides``; unknown keys raise."""
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path) as fh:
            try:
                user = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(f"malformed config {path}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a mapping at the top level")
        cfg = _merge(cfg, user)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    m = cfg["model"]
    if int(m["lag_order"]) < 1:
        raise ConfigError("model.lag_order must be >= 1")
    for key in ("constant", "trend"):
        if m[key] not in ("none", "restricted", "unrestricted"):
            raise ConfigError(f"model.{key} must be none, restricted or unrestricted")
    try:
        ChainConfig.from_dict(cfg["sampler"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sampler: {exc}") from None
    if cfg["selection"]["method"] not in ("gaussian", "kde", "conditional"):
        raise ConfigError("selection.method must be gaussian, kde or conditional")


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def hyperparameters_from_config(cfg: dict, dataset: Dataset) -> HyperParameters:
    pr = cfg["prior"]
    n, p = dataset.n, dataset.lag_order
    fmap = free_entry_map_from_config(cfg, n)
    d_b = fmap.d_b
    n_tilde = dataset.n_tilde
    beta_scale = pr["beta_scale"] if pr["beta_scale"] is not None else 1.0 / n_tilde
    omega_gamma = default_omega_gamma(n, p, 0) * (pr["gamma_scale"] / 0.5)
    k_d = dataset.k_unrestricted
    if k_d:
        block = np.zeros((dataset.k2, dataset.k2))
        block[: n * (p - 1), : n * (p - 1)] = omega_gamma
        block[n * (p - 1):, n * (p - 1):] = pr["deterministic_scale"] * np.eye(k_d)
        omega_gamma = block
    return HyperParameters(
        omega_a=pr["alpha_scale"] * np.eye(n),
        P=beta_scale * np.eye(n_tilde),
        mu_gamma=np.zeros((dataset.k2, n)),
        omega_gamma=omega_gamma,
        mu_b=np.full(d_b, float(pr["b_mean"])),
        omega_b=pr["b_scale"] * np.eye(d_b),
        nu_b_shape=pr["nu_b_shape"],
        nu_b_scale=pr["nu_b_scale"],
        lambda_shape=pr["lambda_shape"],
        s_shape=pr["s_shape"],
        s_scale=pr["s_scale"],
        trans_c=np.broadcast_to(np.asarray(pr["trans_c"], dtype=float), (2,)),
        trans_d=np.broadcast_to(np.asarray(pr["trans_d"], dtype=float), (2,)),
        state_id_index=int(cfg["identification"]["state_id_index"]),
        ordering=cfg["identification"]["ordering"],
    )


def free_entry_map_from_config(cfg: dict, n: int):
    return build_free_entry_map(n, [tuple(ij) for ij in cfg["model"]["zero_restrictions"]])


# --------------------------------------------------------------------------
# Data
# --------------------------------------------------------------------------


def _parse_float(text: str) -> float:
    # Python's float() is correctly rounded, pandas' fast parser is not.
    try:
        return float(text)
    except ValueError:
        return np.nan


def load_dataset(path, cfg: Optional[dict] = None) -> Dataset:
    """Read a CSV of levels and build the dataset described by ``cfg``.

    Lines starting with ``#`` are metadata and skipped.  Errors name the
    offending row (1-based, header excluded) and column.
    """
    cfg = cfg or DEFAULT_CONFIG
    dcfg, mcfg = cfg["data"], cfg["model"]
    try:
        frame = pd.read_csv(path, comment="#", dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from None
    date_col = dcfg.get("date_column")
    if date_col is None and len(frame.columns) and frame.columns[0].lower() in ("date", "time", "period"):
        date_col = frame.columns[0]
    if date_col is not None and date_col not in frame.columns:
        raise DataError(f"date column {date_col!r} not found")
    series = dcfg.get("series") or [c for c in frame.columns if c != date_col]
    missing = [s for s in series if s not in frame.columns]
    if missing:
        raise DataError(f"series not found in {path}: {missing}")
    values = np.empty((len(frame), len(series)))
    for j, col in enumerate(series):
        raw = frame[col].str.strip()
        num = np.array([_parse_float(v) for v in raw], dtype=float)
        bad = np.flatnonzero(~np.isfinite(num))
        if bad.size:
            i = int(bad[0])
            cell = raw.iloc[i]
            what = "missing value" if cell.lower() in ("", "nan", "na", "null") else f"non-numeric value {cell!r}"
            raise DataError(f"{what} at row {i + 1}, column {col!r}")
        values[:, j] = num
    for col in dcfg.get("log") or []:
        if col not in series:
            raise DataError(f"log transform requested for unknown series {col!r}")
        j = series.index(col)
        if np.any(values[:, j] <= 0):
            i = int(np.flatnonzero(values[:, j] <= 0)[0])
            raise DataError(f"non-positive value at row {i + 1}, column {col!r} cannot be logged")
        values[:, j] = np.log(values[:, j])
    p = int(mcfg["lag_order"])
    if values.shape[0] < p + 1:
        raise DataError(f"{values.shape[0]} rows is fewer than lag_order + 1 = {p + 1}")
    d, D, rn, un = deterministic_terms(values.shape[0], mcfg["constant"], mcfg["trend"],
                                       int(mcfg["seasonal"]), int(mcfg["season_start"]))
    return Dataset(values, p, d, D, tuple(series), rn, un)


def _header_lines(meta: Optional[dict]) -> str:
    if not meta:
        return ""
    return "".join(f"# {k}: {v}\n" for k, v in meta.items())


def write_csv(frame: pd.DataFrame, path, meta: Optional[dict] = None) -> None:
    """CSV with ``# key: value`` metadata lines and full float precision."""
    header = {"tool": f"svecmsh {VERSION}"}
    header.update(meta or {})
    with open(path, "w", newline="") as fh:
        fh.write(_header_lines(header))
        frame.to_csv(fh, index=False, float_format="%.17g")


def read_csv_metadata(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            key, _, val = line[1:].strip().partition(":")
            out[key.strip()] = val.strip()
    return out


def write_dataset_csv(dataset: Dataset, path, dates=None, meta: Optional[dict] = None) -> None:
    frame = pd.DataFrame(dataset.observations, columns=list(dataset.names))
    if dates is not None:
        frame.insert(0, "date", list(dates))
    write_csv(frame, path, meta)


# --------------------------------------------------------------------------
# Draw store
# --------------------------------------------------------------------------


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def save_store(store: DrawStore, directory, dataset: Optional[Dataset] = None,
               extra_meta: Optional[dict] = None) -> str:
    """One ``.npy`` file per group plus ``manifest.json``; returns the content hash."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = dict(store.arrays)
    if dataset is not None:
        arrays["data_observations"] = dataset.observations
        arrays["data_restricted"] = dataset.restricted
        arrays["data_unrestricted"] = dataset.unrestricted
    groups = {}
    for name in sorted(arrays):
        fname = f"{name}.npy"
        np.save(directory / fname, np.ascontiguousarray(arrays[name]), allow_pickle=False)
        groups[name] = {"file": fname, "shape": list(np.shape(arrays[name])),
                        "dtype": str(np.asarray(arrays[name]).dtype),
                        "sha256": _sha256(directory / fname)}
    meta = dict(store.meta)
    if dataset is not None:
        meta["dataset"] = {"lag_order": dataset.lag_order, "names": list(dataset.names),
                           "restricted_names": list(dataset.restricted_names),
                           "unrestricted_names": list(dataset.unrestricted_names)}
    meta.update(extra_meta or {})
    digest = hashlib.sha256("".join(groups[k]["sha256"] for k in sorted(groups)).encode()).hexdigest()
    manifest = {"format": STORE_FORMAT, "tool_version": VERSION, "groups": groups,
                "meta": _jsonable(meta), "content_hash": digest}
    tmp = directory / "manifest.json.tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    os.replace(tmp, directory / "manifest.json")
    return digest


def load_store(directory, verify: bool = True):
    """Read a store; returns ``(DrawStore, Dataset or None)``."""
    directory = Path(directory)
    mpath = directory / "manifest.json"
    if not mpath.exists():
        raise FileNotFoundError(f"no manifest.json in {directory}")
    with open(mpath) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != STORE_FORMAT:
        raise ValueError(f"unsupported store format {manifest.get('format')}")
    arrays = {}
    for name, info in manifest["groups"].items():
        fpath = directory / info["file"]
        if verify and _sha256(fpath) != info["sha256"]:
            raise ValueError(f"checksum mismatch for {info['file']}")
        arrays[name] = np.load(fpath, allow_pickle=False)
    meta = manifest["meta"]
    dataset = None
    if "data_observations" in arrays:
        dmeta = meta.get("dataset", {})
        dataset = Dataset(arrays.pop("data_observations"), dmeta.get("lag_order", meta["lag_order"]),
                          arrays.pop("data_restricted"), arrays.pop("data_unrestricted"),
                          tuple(dmeta.get("names", ())), tuple(dmeta.get("restricted_names", ())),
                          tuple(dmeta.get("unrestricted_names", ())))
    meta["content_hash"] = manifest["content_hash"]
    return DrawStore(arrays, meta), dataset


def export_store_csv(store: DrawStore, path) -> None:
    """Flat CSV export: one row per draw, one column per scalar."""
    cols = {}
    for name, arr in store.arrays.items():
        if name in ("paths", "state1_prob") or arr.ndim == 0 or arr.shape[0] != store.n_draws:
            continue
        flat = arr.reshape(arr.shape[0], -1)
        if flat.shape[1] == 1:
            cols[name] = flat[:, 0]
        else:
            idx = np.indices(arr.shape[1:]).reshape(arr.ndim - 1, -1).T + 1
            for k, ix in enumerate(idx):
                cols[f"{name}[{','.join(map(str, ix))}]"] = flat[:, k]
    write_csv(pd.DataFrame(cols), path)

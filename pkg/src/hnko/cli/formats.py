"""File formats: trajectory CSV with a JSON sidecar, checkpoint/metrics JSON,
run manifests with content hashes.

Everything is decimal text, written so that 64-bit floats survive a
write/read round trip exactly: CSV cells use 17 significant digits, JSON
numbers use Python's shortest-exact float repr.  Non-finite values (inf
drift on a non-physical prediction) are encoded as the strings "inf",
"-inf", "nan" inside JSON documents.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import model as hm
from .. import orthogonal
from ..systems import Kdv, Kepler, MassSpring, NBody, SystemSpec, Trajectory

__all__ = [
    "FormatError",
    "Checkpoint",
    "system_to_dict",
    "system_from_dict",
    "write_json",
    "read_json",
    "write_trajectory",
    "read_trajectory",
    "write_checkpoint",
    "read_checkpoint",
    "write_manifest",
    "sha256_of",
]

CHECKPOINT_FORMAT = "hnko-checkpoint-v1"


class FormatError(ValueError):
    """A file did not parse; message carries path and line where known."""


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


# --- system spec <-> dict ------------------------------------------------------

_SYSTEM_KINDS = {
    "nbody": NBody,
    "kepler": Kepler,
    "mass_spring": MassSpring,
    "kdv": Kdv,
}


def system_to_dict(spec: SystemSpec) -> dict:
    if isinstance(spec, NBody):
        return {
            "kind": "nbody",
            "masses": list(spec.masses),
            "g": spec.g,
            "spatial_dim": spec.spatial_dim,
        }
    if isinstance(spec, Kepler):
        return {"kind": "kepler", "m": spec.m, "g": spec.g}
    if isinstance(spec, MassSpring):
        return {"kind": "mass_spring", "m": spec.m, "k": spec.k}
    if isinstance(spec, Kdv):
        return {
            "kind": "kdv",
            "grid_points": spec.grid_points,
            "domain_length": spec.domain_length,
        }
    raise ValueError(f"unknown system type {type(spec).__name__}")


def system_from_dict(data: dict) -> SystemSpec:
    if not isinstance(data, dict) or "kind" not in data:
        raise ValueError("system description must be a dict with a 'kind' entry")
    kind = data["kind"]
    if kind not in _SYSTEM_KINDS:
        raise ValueError(
            f"unknown system kind {kind!r}, expected one of {sorted(_SYSTEM_KINDS)}"
        )
    params = {k: v for k, v in data.items() if k != "kind"}
    if kind == "nbody" and "masses" in params:
        params["masses"] = tuple(params["masses"])
    try:
        return _SYSTEM_KINDS[kind](**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for system {kind!r}: {exc}") from exc


# --- JSON helpers ---------------------------------------------------------------


def _jsonable(obj):
    """Recursively convert to plain JSON types; non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        if not math.isfinite(value):
            return repr(value)  # 'inf', '-inf', 'nan'
        return value
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, complex):
        return [_jsonable(obj.real), _jsonable(obj.imag)]
    return obj


def write_json(path, obj) -> None:
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: file not found")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


# --- trajectory CSV -------------------------------------------------------------


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def write_trajectory(path, traj: Trajectory, system: dict | None = None,
                     noise: dict | None = None) -> None:
    """CSV `t,x0,...,x{n-1}` plus a `<name>.meta.json` sidecar (dt, t0, system, noise)."""
    path = Path(path)
    n = traj.states.shape[1]
    times = traj.times
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"x{i}" for i in range(n)])
        for k in range(traj.states.shape[0]):
            writer.writerow([_fmt(times[k])] + [_fmt(v) for v in traj.states[k]])
    meta = {
        "dt": traj.dt,
        "t0": traj.t0,
        "columns": n,
        "system": system,
        "noise": noise,
    }
    write_json(_sidecar_path(path), meta)


def read_trajectory(path) -> tuple[Trajectory, dict | None]:
    """Parse a trajectory CSV; returns (trajectory, sidecar metadata or None).

    Without a sidecar, dt and t0 are inferred from the time column (which
    then needs at least two rows).  Malformed content reports the offending
    line (1-based, header included).
    """
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: file not found")
    rows: list[list[float]] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{path}:1: empty file") from None
        if not header or header[0] != "t":
            raise FormatError(f"{path}:1: header must start with a 't' column")
        width = len(header)
        if width < 2:
            raise FormatError(f"{path}:1: no state columns")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise FormatError(
                    f"{path}:{lineno}: expected {width} fields, got {len(row)}"
                )
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise FormatError(f"{path}: no data rows")
    data = np.asarray(rows)
    times, states = data[:, 0], data[:, 1:]
    meta = None
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        meta = read_json(sidecar)
        dt, t0 = float(meta["dt"]), float(meta.get("t0", 0.0))
    else:
        if len(rows) < 2:
            raise FormatError(
                f"{path}: single-row file needs a {sidecar.name} sidecar to define dt"
            )
        dt, t0 = float(times[1] - times[0]), float(times[0])
    expected = t0 + dt * np.arange(len(rows))
    if np.max(np.abs(times - expected)) > 1e-9 * max(1.0, float(np.max(np.abs(expected)))):
        raise FormatError(f"{path}: time column is not a uniform grid with dt={dt}")
    return Trajectory(states=states, dt=dt, t0=t0), meta


# --- checkpoints ----------------------------------------------------------------


@dataclass
class Checkpoint:
    model: hm.HnkoModel
    state_scale: np.ndarray | None
    dt: float | None
    x_last: np.ndarray | None
    config: dict | None


def write_checkpoint(path, model: hm.HnkoModel, *, state_scale=None, dt=None,
                     x_last=None, config=None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "n": model.n,
        "p": model.p,
        "q": model.q,
        "variant": model.koopman.variant,
        "encoder": {
            "weights": [w.tolist() for w in model.encoder.weights],
            "biases": [b[:, 0].tolist() for b in model.encoder.biases],
        },
        "decoder": {
            "weights": [w.tolist() for w in model.decoder.weights],
            "biases": [b[:, 0].tolist() for b in model.decoder.biases],
        },
        "koopman": [f.values[:, 0].tolist() for f in model.koopman.factors],
        "koopman_dims": [f.dim for f in model.koopman.factors],
        "log_radius": model.log_radius,
        "hyperplanes": model.hyperplanes.tolist(),
        "state_scale": None if state_scale is None else np.asarray(state_scale).tolist(),
        "dt": dt,
        "x_last": None if x_last is None else np.asarray(x_last).tolist(),
        "config": config,
    }
    write_json(path, doc)


def read_checkpoint(path) -> Checkpoint:
    doc = read_json(path)
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not a {CHECKPOINT_FORMAT} document")
    try:
        def mlp(block):
            return hm.MlpParams(
                [np.asarray(w) for w in block["weights"]],
                [np.asarray(b) for b in block["biases"]],
            )

        factors = [
            orthogonal.SkewParams(dim, np.asarray(values))
            for dim, values in zip(doc["koopman_dims"], doc["koopman"])
        ]
        model = hm.HnkoModel(
            encoder=mlp(doc["encoder"]),
            decoder=mlp(doc["decoder"]),
            koopman=orthogonal.OrthogonalKoopman(doc["variant"], factors),
            log_radius=doc["log_radius"],
            hyperplanes=np.asarray(doc["hyperplanes"], dtype=np.float64).reshape(
                doc["p"], doc["q"]
            ),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: malformed checkpoint: {exc}") from exc
    scale = doc.get("state_scale")
    x_last = doc.get("x_last")
    return Checkpoint(
        model=model,
        state_scale=None if scale is None else np.asarray(scale, dtype=np.float64),
        dt=doc.get("dt"),
        x_last=None if x_last is None else np.asarray(x_last, dtype=np.float64),
        config=doc.get("config"),
    )


# --- manifests ------------------------------------------------------------------


def sha256_of(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, command: str, config: dict | None,
                   inputs: dict[str, Path], outputs: dict[str, Path]) -> Path:
    """Record what a subcommand ran with: resolved config plus artifact hashes.

    Output paths are stored relative to the manifest (their basenames);
    inputs keep the paths as given.
    """
    manifest = {
        "command": command,
        "config": config,
        "inputs": {
            name: {"path": str(p), "sha256": sha256_of(p)} for name, p in inputs.items()
        },
        "outputs": {
            name: {"path": Path(p).name, "sha256": sha256_of(p)}
            for name, p in outputs.items()
        },
    }
    path = Path(out_dir) / "manifest.json"
    write_json(path, manifest)
    return path

"""The work behind each subcommand: simulate, train, predict, baseline,
evaluate, discover.  Each runner writes its artifacts plus a manifest.json
(resolved config, input/output hashes) into the output directory and
returns the artifact paths.

Normalization contract: training may rescale each coordinate by its
max-abs over the training data ("auto"); the scale is stored in the
checkpoint, prediction happens in normalized space, and predicted
trajectories are written back in raw units.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .. import baselines, evaluation, model as hm, training
from ..systems import Trajectory, add_noise, simulate
from . import formats
from .config import ExperimentConfig

__all__ = [
    "W2_POINT_CAP",
    "normalization_scale",
    "run_simulate",
    "run_train",
    "run_predict",
    "run_baseline",
    "run_evaluate",
    "run_discover",
]


# The Wasserstein metric solves an exact assignment (O(N^3)); long-horizon
# predictions are thinned to this many evenly spaced states before it runs.
W2_POINT_CAP = 2000


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def normalization_scale(states: np.ndarray, mode: str) -> np.ndarray:
    """Per-coordinate scale: ones for 'none', max-abs (floored at 1e-12) for 'auto'."""
    if mode == "none":
        return np.ones(states.shape[1])
    if mode == "auto":
        return np.maximum(np.max(np.abs(states), axis=0), 1e-12)
    raise ValueError(f"unknown normalization mode {mode!r}")


def run_simulate(cfg: ExperimentConfig, out_dir) -> dict[str, Path]:
    """Clean trajectory over the prediction span + noisy training segment."""
    out = _out_dir(out_dir)
    spec = cfg.system_spec()
    truth = simulate(
        spec, cfg.x0_array(), cfg.dt, cfg.predict_steps, internal_dt=cfg.internal_dt
    )
    train_clean = Trajectory(states=truth.states[: cfg.train_steps + 1], dt=cfg.dt)
    train_noisy = add_noise(train_clean, cfg.noise["sigma2"], cfg.noise["seed"])
    truth_path = out / "truth.csv"
    train_path = out / "train.csv"
    formats.write_trajectory(truth_path, truth, system=cfg.system)
    formats.write_trajectory(train_path, train_noisy, system=cfg.system, noise=cfg.noise)
    outputs = {"truth": truth_path, "train": train_path}
    formats.write_manifest(out, "simulate", cfg.as_dict(), {}, outputs)
    return outputs


def run_train(cfg: ExperimentConfig, data_path, out_dir) -> dict[str, Path]:
    out = _out_dir(out_dir)
    traj, _meta = formats.read_trajectory(data_path)
    raw = traj.states
    scale = normalization_scale(raw, cfg.normalize)
    states = raw / scale
    m = cfg.model
    model = hm.init_model(
        raw.shape[1],
        int(m["p"]),
        int(m["q"]),
        variant=m["variant"],
        hidden=None if m["hidden"] is None else [int(w) for w in m["hidden"]],
        seed=int(m["seed"]),
        train_states=states,
    )
    trained, history = training.train(model, states, cfg.train_config())
    checkpoint_path = out / "checkpoint.json"
    formats.write_checkpoint(
        checkpoint_path,
        trained,
        state_scale=scale,
        dt=traj.dt,
        x_last=raw[-1],
        config=cfg.as_dict(),
    )
    history_path = out / "loss_history.csv"
    with history_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "dict", "koop", "sphere", "deg", "ind", "total"])
        for epoch, item in enumerate(history):
            row = item.as_dict()
            writer.writerow(
                [epoch]
                + [format(row[k], ".17g") for k in ("dict", "koop", "sphere", "deg", "ind", "total")]
            )
    outputs = {"checkpoint": checkpoint_path, "loss_history": history_path}
    formats.write_manifest(out, "train", cfg.as_dict(), {"data": Path(data_path)}, outputs)
    return outputs


def run_predict(checkpoint_path, steps: int, out_dir, x0=None, dt=None, t0=0.0,
                project: bool = True) -> dict[str, Path]:
    """Roll the trained model from x0 (default: the checkpoint's last training state).

    By default the latent path is projected onto the model's learned
    constraint set each step (see :func:`hnko.model.project_manifold`); the
    start state is typically a noisy observation, and the projection strips
    the off-manifold component the encoder inherits from it.  Pass
    ``project=False`` for the bare decode(K^k encode(x0)) rollout.
    """
    out = _out_dir(out_dir)
    ck = formats.read_checkpoint(checkpoint_path)
    if x0 is None:
        if ck.x_last is None:
            raise ValueError("checkpoint has no stored state; pass an initial condition")
        x0 = ck.x_last
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if x0.shape[0] != ck.model.n:
        raise ValueError(f"x0 has length {x0.shape[0]}, model expects {ck.model.n}")
    if dt is None:
        dt = ck.dt if ck.dt is not None else 1.0
    scale = ck.state_scale if ck.state_scale is not None else np.ones(ck.model.n)
    latent_traj = hm.predict(
        ck.model, x0 / scale, steps, dt=float(dt), t0=float(t0), project=project
    )
    pred = Trajectory(states=latent_traj.states * scale, dt=latent_traj.dt, t0=latent_traj.t0)
    pred_path = out / "pred.csv"
    system = None if ck.config is None else ck.config.get("system")
    formats.write_trajectory(pred_path, pred, system=system)
    outputs = {"prediction": pred_path}
    formats.write_manifest(
        out,
        "predict",
        {"steps": int(steps), "dt": float(dt), "t0": float(t0), "x0": x0.tolist(),
         "project": bool(project)},
        {"checkpoint": Path(checkpoint_path)},
        outputs,
    )
    return outputs


def run_baseline(method: str, data_path, steps: int, out_dir, x0=None, degree: int = 2,
                 dt=None) -> dict[str, Path]:
    """Fit and roll out a least-squares linear predictor on the data file."""
    out = _out_dir(out_dir)
    traj, _meta = formats.read_trajectory(data_path)
    if method == "dmd":
        lm = baselines.dmd_fit(traj.states)
    elif method == "edmd":
        lm = baselines.edmd_fit(traj.states, degree=degree)
    else:
        raise ValueError(f"unknown baseline method {method!r}, expected 'dmd' or 'edmd'")
    if x0 is None:
        x0 = traj.states[0]
    x0 = np.asarray(x0, dtype=np.float64).reshape(-1)
    if dt is None:
        dt = traj.dt
    pred = baselines.linear_predict(lm, x0, steps, dt=float(dt), t0=traj.t0)
    model_path = out / "baseline_model.json"
    formats.write_json(
        model_path,
        {
            "method": method,
            "degree": degree if method == "edmd" else None,
            "state_dim": lm.state_dim,
            "matrix": lm.matrix.tolist(),
            "spectral_radius": baselines.spectral_radius(lm),
        },
    )
    pred_path = out / "baseline_pred.csv"
    formats.write_trajectory(pred_path, pred)
    outputs = {"model": model_path, "prediction": pred_path}
    formats.write_manifest(
        out,
        "baseline",
        {"method": method, "degree": degree, "steps": int(steps), "x0": x0.tolist()},
        {"data": Path(data_path)},
        outputs,
    )
    return outputs


def _align_by_time(pred: Trajectory, truth: Trajectory) -> tuple[Trajectory, Trajectory]:
    """Clip both trajectories to their shared time window.

    A prediction normally starts mid-way through the reference trajectory
    (at the last training state), so the files overlap rather than match;
    both must share the same dt and sit on the same time grid.
    """
    if abs(pred.dt - truth.dt) > 1e-9 * max(abs(pred.dt), abs(truth.dt)):
        raise ValueError(f"time steps differ: {pred.dt} vs {truth.dt}")
    dt = truth.dt
    shift = (pred.t0 - truth.t0) / dt
    offset = round(shift)
    if abs(shift - offset) > 1e-6:
        raise ValueError(
            f"start times {pred.t0} and {truth.t0} are not a whole number of steps apart"
        )
    p_start, t_start = max(0, -offset), max(0, offset)
    count = min(pred.states.shape[0] - p_start, truth.states.shape[0] - t_start)
    if count <= 0:
        raise ValueError("the predicted and reference trajectories do not overlap in time")
    t0 = truth.t0 + t_start * dt
    return (
        Trajectory(states=pred.states[p_start : p_start + count], dt=dt, t0=t0),
        Trajectory(states=truth.states[t_start : t_start + count], dt=dt, t0=t0),
    )


def run_evaluate(predicted_path, truth_path, out_dir, system: dict | None = None) -> dict[str, Path]:
    """Metrics JSON + per-step CSV; the system comes from the truth sidecar
    unless given explicitly.  The files are clipped to their common time
    window first, so a prediction launched from the end of the training
    segment can be scored directly against the full reference trajectory."""
    out = _out_dir(out_dir)
    pred, _pred_meta = formats.read_trajectory(predicted_path)
    truth, truth_meta = formats.read_trajectory(truth_path)
    if system is None and truth_meta is not None:
        system = truth_meta.get("system")
    if system is None:
        raise ValueError(
            "no system description: the truth file has no sidecar metadata, "
            "pass a preset or config"
        )
    spec = formats.system_from_dict(system)
    pred, truth = _align_by_time(pred, truth)
    report = evaluation.evaluate(pred, truth, spec, w2_cap=W2_POINT_CAP)
    metrics_path = out / "metrics.json"
    doc = report.as_dict()
    doc["wasserstein2_points"] = min(len(pred.states), W2_POINT_CAP)
    doc["time_range"] = [truth.t0, truth.t0 + (truth.states.shape[0] - 1) * truth.dt]
    doc["system"] = system
    formats.write_json(metrics_path, doc)
    series_path = out / "metrics_per_step.csv"
    names = sorted(report.invariant_drift)
    times = truth.times
    with series_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "mse"] + [f"drift_{name}" for name in names])
        for k in range(len(report.mse_per_step)):
            writer.writerow(
                [format(times[k], ".17g"), format(report.mse_per_step[k], ".17g")]
                + [format(report.invariant_drift[name][k], ".17g") for name in names]
            )
    outputs = {"metrics": metrics_path, "per_step": series_path}
    formats.write_manifest(
        out,
        "evaluate",
        {"system": system},
        {"predicted": Path(predicted_path), "truth": Path(truth_path)},
        outputs,
    )
    return outputs


def run_discover(checkpoint_path, data_path, out_dir, tol: float = 1e-3) -> dict[str, Path]:
    """Invariant candidates + slow modes + per-feature temporal variances."""
    out = _out_dir(out_dir)
    ck = formats.read_checkpoint(checkpoint_path)
    traj, _meta = formats.read_trajectory(data_path)
    if traj.states.shape[1] != ck.model.n:
        raise ValueError(
            f"data has {traj.states.shape[1]} coordinates, model expects {ck.model.n}"
        )
    scale = ck.state_scale if ck.state_scale is not None else np.ones(ck.model.n)
    states = traj.states / scale
    candidates = evaluation.discover_invariants(ck.model, states, tol=tol)
    modes = evaluation.slow_modes(ck.model, tol=tol)
    fv = evaluation.feature_variance(ck.model, states)
    doc = {
        "tolerance": tol,
        "candidates": [
            {
                "eigenvalue": [c.eigenvalue.real, c.eigenvalue.imag],
                "coefficients": c.coefficients.tolist(),
                "temporal_variance": c.temporal_variance,
            }
            for c in candidates
        ],
        "slow_modes": [
            {
                "eigenvalue": [m.eigenvalue.real, m.eigenvalue.imag],
                "angle": m.angle,
                "plane": m.plane.tolist(),
            }
            for m in modes
        ],
        "feature_variance": fv.tolist(),
        "median_feature_variance": float(np.median(fv)),
    }
    invariants_path = out / "invariants.json"
    formats.write_json(invariants_path, doc)
    outputs = {"invariants": invariants_path}
    formats.write_manifest(
        out,
        "discover",
        {"tolerance": tol},
        {"checkpoint": Path(checkpoint_path), "data": Path(data_path)},
        outputs,
    )
    return outputs

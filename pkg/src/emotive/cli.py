"""``emotive`` command-line front-end.

Subcommands: ``project``, ``synth``, ``fit``, ``motion`` and ``eval``.
Exit codes: 0 on success, 1 for computation errors, 2 for usage and I/O
errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .correlation import (Axis, FeatureMap, avg_pool_1d, avg_pool_2d, fuse_temporal, spatial_cost_pyramid,
                          temporal_cost_pyramid)
from .errors import EmotiveError
from .events import (EventStream, RigidSceneConfig, parse_event_stream, slice_window,
                     synth_rigid_scene, write_event_stream)
from .fitting import CorrespondenceSet, CostPyramids, LossConfig, fit_trajectory_lsq, refine_trajectory
from .io import (flow_to_color, read_container, read_correspondences, read_flo, read_trajectory, write_container,
                 write_correspondences, write_flo, write_pgm, write_ppm, write_trajectory)
from .motion import (FlowField, MiDField, upsample_grid, metrics, motion_in_depth_multiview,
                     motion_in_depth_single, normalized_scene_flow, optical_flow)
from .nurbs import KnotVector, Trajectory, density_adapt, eval_trajectory, rational_linear_trajectory, uniform_knots
from .projection import density_field, event_kymograph, event_voxel

CONFIG_SCHEMA = "emotive.run/1"


@dataclass
class RunConfig:
    """Hyperparameters shared by the subcommands; each is also a long flag."""

    bins: int = 7
    t_bins: int = 120
    sigma: float = 10.0
    n_a: int = 6
    n: int = 5
    p: int = 3
    radius: int = 4
    levels: int = 2
    iters: int = 6
    gamma: float = 0.8
    downsample: int = 0  # 0 picks a factor from the sensor size
    seed: int = 0


_FLAG_HELP = {
    "bins": "voxel time bins",
    "t_bins": "kymograph time bins",
    "sigma": "kymograph Gaussian width in bins",
    "n_a": "temporal blocks for density adaptation",
    "n": "control points per trajectory",
    "p": "spline degree",
    "radius": "cost lookup radius",
    "levels": "cost pyramid levels",
    "iters": "refinement iterations",
    "gamma": "loss decay across iterations",
    "downsample": "sensor-to-trajectory grid factor; 0 = smallest power of two giving a long side <= 64",
    "seed": "random seed",
}


class UsageError(Exception):
    """Bad arguments or unreadable inputs (exit code 2)."""


def _warn(msg):
    print(f"emotive: warning: {msg}", file=sys.stderr)


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None


def _require(path):
    if not Path(path).is_file():
        raise UsageError(f"missing input file {path}")
    return path


def _event_format(path, fmt):
    if fmt:
        return fmt
    return "raw_bin" if Path(path).suffix.lower() in (".bin", ".raw") else "csv"


def _load_events(args) -> EventStream:
    buf = _read_bytes(args.events)
    fmt = _event_format(args.events, args.format)
    sensor = tuple(args.sensor) if args.sensor else None
    window = tuple(args.window) if args.window else None
    if args.manifest:
        try:
            doc = json.loads(Path(_require(args.manifest)).read_text())
            sensor = sensor or tuple(doc["scene"]["sensor"])
            window = window or tuple(doc["window_us"])
        except (KeyError, json.JSONDecodeError) as exc:
            raise UsageError(f"{args.manifest}: not a synth manifest ({exc})") from None
    source = buf.decode("utf-8") if fmt == "csv" else buf
    return parse_event_stream(source, fmt, sensor=sensor, window=window, strict=args.strict)


def _mid_to_nan(mid: MiDField):
    return np.where(mid.valid, mid.m, np.nan)


def _mid_from_container(path) -> MiDField:
    data, _ = read_container(_require(path))
    ok = np.isfinite(data)
    return MiDField(np.where(ok, data, 1.0), ok)


# ---------------------------------------------------------------------------
# project


def cmd_project(args, cfg: RunConfig) -> int:
    stream = _load_events(args)
    if len(stream) == 0:
        _warn("empty event stream; writing zero-valued outputs")
    prefix = args.out
    vox = event_voxel(stream, cfg.bins)
    kymo = event_kymograph(stream, cfg.t_bins, cfg.sigma, truncate=args.truncate)
    meta = {"window": list(stream.window), "sensor": list(stream.sensor)}
    write_container(f"{prefix}_voxel.emok", vox.data, {**meta, "kind": "voxel", "bin_duration": vox.bin_duration})
    for name, arr in (("kx", kymo.kx), ("ky", kymo.ky)):
        write_container(f"{prefix}_kymo_{name}.emok", arr, {**meta, "kind": f"kymograph_{name}", "sigma": cfg.sigma})
        write_pgm(f"{prefix}_kymo_{name}.pgm", arr)
    write_pgm(f"{prefix}_voxel.pgm", vox.data.sum(axis=0))
    if args.figures:
        from .plotting import plot_kymograph
        plot_kymograph(kymo.kx, kymo.ky, f"{prefix}_kymo.png")
    print(f"events={len(stream)} sensor={stream.sensor[0]}x{stream.sensor[1]} bins={cfg.bins} t_bins={cfg.t_bins}")
    return 0


# ---------------------------------------------------------------------------
# synth

DEFAULT_SCENE = {
    "schema": "emotive.scene/1",
    "sensor": [48, 64],
    "intrinsics": {"fx": 100.0, "fy": 100.0, "cx": 32.0, "cy": 24.0},
    "plane": {"depth": 10.0, "rows": 3, "cols": 4, "margin": 10},
    "velocity": [0.5, 0.2, -2.0],
    "duration": 1.0,
    "contrast_threshold": 0.5,
}

CORR_TIMES = np.arange(1, 9) / 8.0


def _load_scene(path):
    if path is None:
        return RigidSceneConfig.from_dict(DEFAULT_SCENE)
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if doc.get("schema", "emotive.scene/1") != "emotive.scene/1":
        raise UsageError(f"{path}: unsupported scene schema {doc.get('schema')!r}")
    try:
        return RigidSceneConfig.from_dict(doc)
    except KeyError as exc:
        raise UsageError(f"{path}: missing field {exc}") from None


def cmd_synth(args, cfg: RunConfig) -> int:
    scene = _load_scene(args.scene)
    stream, gt = synth_rigid_scene(scene, cfg.seed)
    prefix = args.out
    Path(f"{prefix}.csv").write_text(write_event_stream(stream, "csv"))
    Path(f"{prefix}.bin").write_bytes(write_event_stream(stream, "raw_bin"))
    h, w = scene.sensor
    flow, mid, valid = gt.rasterize(scene.duration)
    write_flo(f"{prefix}_flow.flo", flow[..., 0], flow[..., 1], valid)
    write_container(f"{prefix}_mid.emok", np.where(valid, mid, np.nan), {"kind": "mid", "t1": 1.0})

    rows, cols, keep = gt.pixel_index()
    disp = gt.flow(CORR_TIMES * scene.duration)[:, keep]  # (S, N, 2)
    pix = np.stack([rows[keep], cols[keep]], axis=1)
    corr = CorrespondenceSet(np.tile(pix, (len(CORR_TIMES), 1)), np.repeat(CORR_TIMES, len(pix)),
                             disp.reshape(-1, 2), (h, w))
    knots = uniform_knots(cfg.n, cfg.p)
    z0 = gt.common_depth()
    if z0 is not None:
        ratio = (z0 + scene.velocity[2] * scene.duration) / z0
        weights = rational_linear_trajectory(np.zeros((1, 1, 2)), ratio, knots).weights
    else:
        _warn("scene points have different depths; correspondence weights default to uniform")
        weights = np.ones(knots.n_control)
    write_correspondences(f"{prefix}_corr.json", corr, {
        "knots": knots.knots.tolist(), "degree": knots.degree, "weights": np.asarray(weights).tolist(),
        "intrinsics": scene.intrinsics.to_dict(), "sensor": [h, w]})

    mids = gt.mid(scene.duration)
    manifest = {
        "schema": "emotive.manifest/1",
        "scene": scene.to_dict(),
        "seed": cfg.seed,
        "n_events": len(stream),
        "window_us": list(stream.window),
        "mid_tau1": float(mids[0]) if len(mids) and np.all(mids == mids[0]) else None,
        "n_points": gt.n_points,
        "valid_pixels": int(valid.sum()),
        "files": {k: Path(f"{prefix}{s}").name for k, s in (
            ("events_csv", ".csv"), ("events_bin", ".bin"), ("flow", "_flow.flo"), ("mid", "_mid.emok"),
            ("correspondences", "_corr.json"))},
    }
    _write_json(f"{prefix}_manifest.json", manifest)
    if len(stream) == 0:
        _warn("scene produced no events")
    print(f"events={len(stream)} points={gt.n_points} valid_pixels={int(valid.sum())}")
    return 0


# ---------------------------------------------------------------------------
# fit


def _unit(a):
    m = np.abs(a).max()
    return a / m if m > 0 else a


def auto_downsample(sensor, max_side: int = 64) -> int:
    factor = 1
    while max(sensor) / factor > max_side:
        factor *= 2
    return factor


def _block_edges(window, n_a):
    t0, t1 = window
    edges = np.round(np.linspace(t0, t1, n_a + 1)).astype(np.int64)
    edges[-1] = t1 + 1  # the last block includes the window end
    return edges


def _projection_pyramids(stream: EventStream, kymo, cfg: RunConfig):
    """Cost pyramids from projection-derived features on the downsampled grid.

    Spatial features are the voxel bins of the first and last temporal blocks
    (one channel per bin). Temporal axis features of block ``k`` are the
    kymograph rows of its time bins (one channel per bin). All features are
    average-pooled by the downsampling factor and scaled to unit peak.
    """
    h, w = stream.sensor
    ds = cfg.downsample or auto_downsample((h, w))
    grid = (h // ds, w // ds)
    edges = _block_edges(stream.window, cfg.n_a)
    voxels = []
    for k in (0, cfg.n_a - 1):
        lo, hi = int(edges[k]), int(edges[k + 1])
        part = slice_window(stream, lo, hi)
        part = EventStream(part.t, part.x, part.y, part.p, part.sensor, (lo, max(lo + 1, hi - 1)))
        voxels.append(FeatureMap(_unit(avg_pool_2d(event_voxel(part, cfg.bins).data, ds))))
    spatial = spatial_cost_pyramid(voxels[0], voxels[1], cfg.levels)
    axis_pyramids = []
    for arr, axis, size in ((kymo.ky, Axis.HT, grid[0]), (kymo.kx, Axis.WT, grid[1])):
        pad = (-arr.shape[0]) % cfg.n_a
        if pad:
            arr = np.concatenate([arr, np.zeros((pad, arr.shape[1]))])
        blocks = arr.reshape(cfg.n_a, -1, arr.shape[1])
        feats = [FeatureMap(_unit(avg_pool_1d(b, ds)[:, :size]), axis) for b in blocks]
        axis_pyramids.append(temporal_cost_pyramid(feats, cfg.levels))
    return CostPyramids(spatial=spatial, temporal=fuse_temporal(*axis_pyramids)), grid


def _sample_epe(traj, corr: CorrespondenceSet):
    if not len(corr):
        return 0.0, 0.0
    err = []
    for t in np.unique(corr.times):
        sel = corr.times == t
        pred = eval_trajectory(traj, float(t))[corr.pixels[sel, 0], corr.pixels[sel, 1]]
        err.append(np.hypot(*(pred - corr.displacements[sel]).T))
    err = np.concatenate(err)
    return float(err.max()), float(err.mean())


def _fit_lsq(args, cfg: RunConfig) -> int:
    try:
        corr, doc = read_correspondences(_require(args.lsq))
    except (KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"{args.lsq}: unreadable correspondence file ({exc})") from None
    if "knots" in doc:
        knots = KnotVector(doc["knots"], doc["degree"])
    else:
        knots = uniform_knots(cfg.n, cfg.p)
    weights = np.asarray(doc.get("weights", np.ones(knots.n_control)), dtype=np.float64)
    traj, diag = fit_trajectory_lsq(corr, knots, weights, reg=args.reg, smooth=args.smooth, return_diagnostics=True)
    extra = {"sensor": doc.get("sensor", list(corr.shape))}
    if "intrinsics" in doc:
        extra["intrinsics"] = doc["intrinsics"]
    write_trajectory(f"{args.out}_traj.emok", traj, extra)
    epe_max, epe_mean = _sample_epe(traj, corr)
    report = {"mode": "lsq", "samples": len(corr), "sample_epe_max": epe_max, "sample_epe_mean": epe_mean,
              **diag.to_dict()}
    _write_json(f"{args.out}_fit.json", report)
    print(f"mode=lsq samples={len(corr)} sample_epe_max={epe_max!r}")
    return 0


def cmd_fit(args, cfg: RunConfig) -> int:
    if args.lsq:
        return _fit_lsq(args, cfg)
    if not args.events:
        raise UsageError("fit needs --events (or --lsq CORR.json)")
    stream = _load_events(args)
    if len(stream) == 0:
        raise UsageError(f"{args.events}: no events to fit")
    gt = None
    if args.gt:
        u, v, valid = read_flo(_require(args.gt))
        if u.shape != stream.sensor:
            raise UsageError(f"ground truth {u.shape} does not match sensor {stream.sensor}")
        gt = FlowField(u, v, valid)
    kymo = event_kymograph(stream, cfg.t_bins, cfg.sigma)
    dens = density_field(kymo, cfg.n_a)
    # softmax is not scale-invariant; raw densities would put almost all weight on one control point
    profile = dens.profile()
    peak = np.abs(profile).max()
    adapt = density_adapt(profile / peak if peak > 0 else profile, cfg.n, cfg.p)
    pyramids, grid = _projection_pyramids(stream, kymo, cfg)
    traj0 = Trajectory.zeros(grid, adapt.knots, adapt.weights)
    traj, history = refine_trajectory(traj0, pyramids, adapt, cfg=LossConfig(gamma=cfg.gamma, iters=cfg.iters),
                                      radius=cfg.radius)
    write_trajectory(f"{args.out}_traj.emok", traj, {"sensor": list(stream.sensor)})
    report = {"mode": "refine", "iters": cfg.iters, "grid": list(grid),
              "anchor_times": adapt.anchor_times.tolist(), "anchor_blocks": adapt.anchor_indices.tolist(),
              "density_profile": adapt.profile.tolist()}
    if gt is not None:
        epes = [metrics(_upsample_flow(h, stream.sensor, grid), gt).epe for h in history]
        report["epe_history"] = epes
        if args.figures:
            from .plotting import plot_history
            plot_history(epes, f"{args.out}_epe.png")
        print("epe_history=" + ",".join(f"{e:.6g}" for e in epes))
    _write_json(f"{args.out}_fit.json", report)
    return 0


def _upsample_flow(flow: FlowField, sensor, grid) -> FlowField:
    if tuple(sensor) == tuple(grid):
        return flow
    sy, sx = sensor[0] / grid[0], sensor[1] / grid[1]
    return FlowField(upsample_grid(flow.u, sensor) * sx, upsample_grid(flow.v, sensor) * sy, True)


# ---------------------------------------------------------------------------
# motion


def _fmt_tau(tau):
    return f"{tau:g}"


def cmd_motion(args, cfg: RunConfig) -> int:
    try:
        traj, meta = read_trajectory(_require(args.traj))
    except (KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"{args.traj}: unreadable trajectory ({exc})") from None
    sensor = tuple(meta.get("sensor", traj.grid_shape))
    prefix = args.out
    for tau in args.taus:
        f = optical_flow(traj, tau, sensor)
        write_flo(f"{prefix}_flow_t{_fmt_tau(tau)}.flo", f.u, f.v)
    flow = optical_flow(traj, 1.0, sensor)
    write_flo(f"{prefix}_flow.flo", flow.u, flow.v)
    write_ppm(f"{prefix}_flow.ppm", flow_to_color(flow.u, flow.v, args.max_flow))
    if args.multiview:
        mid = motion_in_depth_multiview(traj, args.views)
    else:
        mid = motion_in_depth_single(traj, 1.0)
    if tuple(sensor) != traj.grid_shape:
        m = upsample_grid(mid.m, sensor)
        valid = upsample_grid(mid.valid.astype(np.float64), sensor) > 0.999
        mid = MiDField(np.where(valid, m, 1.0), valid)
    write_container(f"{prefix}_mid.emok", _mid_to_nan(mid), {"kind": "mid", "t1": 1.0})
    write_pgm(f"{prefix}_mid.pgm", _mid_to_nan(mid))
    sf = normalized_scene_flow(flow, mid)
    write_container(f"{prefix}_sceneflow.emok", np.where(sf.valid[..., None], sf.s, np.nan),
                    {"kind": "normalized_scene_flow"})
    if args.figures:
        from .plotting import plot_flow, plot_mid
        plot_flow(flow.u, flow.v, f"{prefix}_flow.png", args.max_flow)
        plot_mid(mid.m, mid.valid, f"{prefix}_mid.png")
    print(f"grid={traj.grid_shape[0]}x{traj.grid_shape[1]} sensor={sensor[0]}x{sensor[1]} "
          f"mid_valid={int(mid.valid.sum())}")
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args, cfg: RunConfig) -> int:
    pu, pv, _ = read_flo(_require(f"{args.pred}_flow.flo"))
    gu, gv, gvalid = read_flo(_require(f"{args.gt}_flow.flo"))
    pred_flow = FlowField(pu, pv, True)
    gt_flow = FlowField(gu, gv, gvalid)
    pred_mid = gt_mid = None
    if Path(f"{args.gt}_mid.emok").is_file() and Path(f"{args.pred}_mid.emok").is_file():
        pred_mid = _mid_from_container(f"{args.pred}_mid.emok")
        gt_mid = _mid_from_container(f"{args.gt}_mid.emok")
    report = metrics(pred_flow, gt_flow, pred_mid, gt_mid)
    text = report.to_text()
    sys.stdout.write(text)
    out = args.out or args.pred
    Path(f"{out}_metrics.txt").write_text(text)
    Path(f"{out}_metrics.json").write_text(report.to_json() + "\n")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


def _add_config_flags(p: argparse.ArgumentParser, names):
    defaults = RunConfig()
    for name in names:
        value = getattr(defaults, name)
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=type(value), default=value,
                       help=f"{_FLAG_HELP[name]} (default: {value})")


def _add_event_input(p, required=True):
    p.add_argument("--events", required=required, help="event file (.csv or .bin)")
    p.add_argument("--format", choices=["csv", "raw_bin"], help="override the format implied by the extension")
    p.add_argument("--sensor", type=int, nargs=2, metavar=("H", "W"), help="sensor size (inferred if omitted)")
    p.add_argument("--window", type=int, nargs=2, metavar=("T0", "T1"), help="time window in microseconds")
    p.add_argument("--strict", action="store_true", help="reject out-of-order timestamps")
    p.add_argument("--manifest", help="synth manifest supplying the sensor size and time window")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="emotive", description="Event-based trajectory, flow and depth tools.")
    parser.add_argument("--config", help=f"JSON file with {CONFIG_SCHEMA} parameters (flags override)")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("project", help="voxel and kymograph projections of an event file")
    _add_event_input(p)
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--truncate", action="store_true", help="cut Gaussian tails beyond 4 sigma")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    _add_config_flags(p, ["bins", "t_bins", "sigma"])
    p.set_defaults(func=cmd_project)
    subs["project"] = p

    p = sub.add_parser("synth", help="render a rigid scene to events and ground truth")
    p.add_argument("--scene", help="scene JSON (emotive.scene/1); a built-in plane scene if omitted")
    p.add_argument("--out", required=True, help="output prefix")
    _add_config_flags(p, ["seed", "n", "p"])
    p.set_defaults(func=cmd_synth)
    subs["synth"] = p

    p = sub.add_parser("fit", help="estimate a trajectory from events or correspondences")
    _add_event_input(p, required=False)
    p.add_argument("--lsq", metavar="CORR", help="fit control points to a correspondence file instead")
    p.add_argument("--gt", help="ground-truth .flo at the window end; enables the EPE history")
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--reg", type=float, default=1e-6, help="ridge for under-determined pixels (default: 1e-6)")
    p.add_argument("--smooth", type=float, default=0.0, help="velocity smoothness weight (default: 0)")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    _add_config_flags(p, ["t_bins", "sigma", "n_a", "n", "p", "radius", "levels", "iters", "gamma", "downsample"])
    p.set_defaults(func=cmd_fit)
    subs["fit"] = p

    p = sub.add_parser("motion", help="flow, motion in depth and scene flow from a trajectory")
    p.add_argument("--traj", required=True, help="trajectory container")
    p.add_argument("--out", required=True, help="output prefix")
    p.add_argument("--taus", type=float, nargs="+", default=[1.0], help="flow times in [0, 1] (default: 1)")
    p.add_argument("--multiview", action="store_true", help="aggregate motion in depth over --views")
    p.add_argument("--views", type=float, nargs="+", default=[0.25, 0.5, 0.75, 1.0],
                   help="timestamps for multi-view aggregation")
    p.add_argument("--max-flow", type=float, default=None, help="colour wheel saturation (default: 98th percentile)")
    p.add_argument("--figures", action="store_true", help="also render PNG figures")
    p.set_defaults(func=cmd_motion)
    subs["motion"] = p

    p = sub.add_parser("eval", help="compare predicted and ground-truth flow / motion in depth")
    p.add_argument("--pred", required=True, help="prediction prefix (reads PREFIX_flow.flo, PREFIX_mid.emok)")
    p.add_argument("--gt", required=True, help="ground-truth prefix")
    p.add_argument("--out", help="report prefix (default: the prediction prefix)")
    p.set_defaults(func=cmd_eval)
    subs["eval"] = p
    return parser, subs


def _apply_config(path, subs, parser):
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        parser.error(f"cannot read config {path}: {exc.strerror or exc}")
    except json.JSONDecodeError as exc:
        parser.error(f"config {path}: invalid JSON ({exc})")
    if doc.get("schema") != CONFIG_SCHEMA:
        parser.error(f"config {path}: expected schema {CONFIG_SCHEMA!r}")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(doc) - known - {"schema"}
    if unknown:
        parser.error(f"config {path}: unknown keys {sorted(unknown)}")
    values = {k: v for k, v in doc.items() if k in known}
    for p in subs.values():
        p.set_defaults(**values)


def run_config(args) -> RunConfig:
    base = asdict(RunConfig())
    return RunConfig(**{k: getattr(args, k, v) for k, v in base.items()})


def main(argv=None) -> int:
    parser, subs = build_parser()
    pre, _ = parser.parse_known_args(argv)
    if pre.config:
        _apply_config(pre.config, subs, parser)
    args = parser.parse_args(argv)
    cfg = run_config(args)
    try:
        if getattr(args, "out", None):
            Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"emotive: error: {exc}", file=sys.stderr)
        return 2
    except EmotiveError as exc:
        print(f"emotive: error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"emotive: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"emotive: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

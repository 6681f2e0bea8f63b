"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import json
import math
import os
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest
from oracles import (fuse_loop, kymograph_loop, pooled_mean_loop, spatial_cost_loop, temporal_cost_loop,
                     voxel_loop)

from emotive.cli import DEFAULT_SCENE, main
from emotive.correlation import (Axis, FeatureMap, bilinear_sample, fuse_temporal, query_neighborhood,
                                 spatial_cost_pyramid, temporal_cost_pyramid)
from emotive.events import CameraIntrinsics, Event, EventStream, GroundTruth, RigidSceneConfig
from emotive.fitting import CorrespondenceSet, fit_trajectory_lsq
from emotive.motion import (FlowField, MiDField, motion_in_depth_multiview, motion_in_depth_single,
                            normalized_scene_flow, optical_flow, transport_mid)
from emotive.nurbs import (Trajectory, basis_all, clamped_knots, density_adapt, eval_trajectory, eval_velocity,
                           rational_linear_trajectory, uniform_knots)
from emotive.projection import event_kymograph, event_voxel, mean_filter_3d

EPS = np.finfo(np.float64).eps


class Checks:
    def __init__(self):
        self.items = []

    def add(self, name, ok, detail=""):
        self.items.append((name, bool(ok), detail))

    @property
    def ok(self):
        return bool(self.items) and all(ok for _, ok, _ in self.items)


@contextmanager
def criterion(capsys, number, title):
    checks = Checks()
    start = time.perf_counter()
    try:
        yield checks
    except Exception as exc:  # a crash is reported as a failed check, then re-raised by the assert
        checks.add("exception", False, repr(exc))
    elapsed = time.perf_counter() - start
    failed = [f"{n} ({d})" for n, ok, d in checks.items if not ok]
    summary = "; ".join(f"{n}: {d}" for n, _, d in checks.items if d)
    with capsys.disabled():
        status = "PASS" if checks.ok else "FAIL"
        print(f"\n{status} criterion {number} [{title}] {elapsed:.2f}s :: {summary}")
    assert checks.ok, "failed: " + ", ".join(failed)


def random_stream(rng, n, shape=(6, 9), window=(0, 10_000)):
    t = np.sort(rng.integers(window[0], window[1] + 1, n))
    return EventStream(t, rng.integers(0, shape[1], n), rng.integers(0, shape[0], n), rng.choice([-1, 1], n),
                       shape, window)


def random_knots(rng, p, n, min_gap=0.0):
    while True:
        interior = np.sort(rng.uniform(0.0, 1.0, n - p - 1))
        edges = np.concatenate([[0.0], interior, [1.0]])
        if np.all(np.diff(edges) > min_gap):
            return clamped_knots(n, p, interior)


# ---------------------------------------------------------------------------


def test_criterion_1_nurbs(capsys):
    with criterion(capsys, 1, "NURBS correctness") as c:
        rng = np.random.default_rng(1)
        t0 = time.perf_counter()
        worst = 0.0
        for _ in range(1000):
            p = int(rng.integers(1, 5))
            n = int(rng.integers(p + 1, p + 9))
            knots = random_knots(rng, p, n)
            t = rng.uniform(0.0, 1.0, 100)
            t[:2] = (0.0, 1.0)
            N = basis_all(knots, p, t)
            worst = max(worst, float(np.abs(N.sum(axis=1) - 1.0).max()))
        c.add("partition of unity", worst <= 1e-12, f"max|sum N - 1| = {worst:.2e} over 1e5 (knots, t)")

        exact = True
        for _ in range(200):
            p = int(rng.integers(1, 5))
            n = int(rng.integers(p + 1, p + 9))
            knots = random_knots(rng, p, n)
            ctrl = rng.normal(size=(n, 1, 3, 2))
            ctrl[0] = 0.0
            traj = Trajectory(ctrl, rng.uniform(0.1, 3.0, n), knots)
            ends = eval_trajectory(traj, np.array([0.0, 1.0]))
            exact &= np.array_equal(ends[0], ctrl[0]) and np.array_equal(ends[1], ctrl[-1])
        c.add("clamped endpoints", exact, "C(0) = P_0 and C(1) = P_last bit-exact on 200 rational curves")

        h = 1e-5
        worst = 0.0
        for _ in range(100):
            n = int(rng.integers(4, 10))
            knots = random_knots(rng, 3, n, min_gap=0.05)
            ctrl = rng.normal(size=(n, 1, 100, 2))
            ctrl[0] = 0.0
            traj = Trajectory(ctrl, rng.uniform(0.2, 3.0, n), knots)
            t = rng.uniform(0.01, 0.99, 5)
            analytic = eval_velocity(traj, t)
            fd = (eval_trajectory(traj, t + h) - eval_trajectory(traj, t - h)) / (2 * h)
            rel = np.abs(analytic - fd) / np.maximum(np.abs(analytic), 1.0)
            worst = max(worst, float(rel.max()))
        c.add("derivative vs finite difference", worst <= 1e-5, f"max rel err {worst:.2e} on 1e4 curves")

        bez = Trajectory(np.arange(4.0)[:, None, None, None] * np.array([1.0, 0.0]), np.ones(4), uniform_knots(4, 3))
        tt = np.linspace(0.0, 1.0, 1001)
        err = float(np.abs(eval_trajectory(bez, tt)[:, 0, 0, 0] - 3.0 * tt).max())
        c.add("Bezier x(t) = 3t", err <= 1e-12, f"max err {err:.1e}")
        elapsed = time.perf_counter() - t0
        c.add("runtime", elapsed < 5.0, f"{elapsed:.2f}s < 5s")


def test_criterion_2_projection(capsys):
    with criterion(capsys, 2, "projection correctness") as c:
        rng = np.random.default_rng(2)
        # window 2048 us with 9 bins puts every event on a multiple of 1/256 bin: all voxel sums are exact
        dyadic = (0, 2048)
        a, b = random_stream(rng, 300, window=dyadic), random_stream(rng, 300, window=dyadic)
        va, vb, vab = (event_voxel(s, 9).data for s in (a, b, a.concat(b)))
        c.add("voxel linearity", np.array_equal(vab, va + vb), "bit-exact on dyadic times")

        a, b = random_stream(rng, 400), random_stream(rng, 400)
        ab = a.concat(b)
        ka, kb, kab = (event_kymograph(s, 60, 4.0) for s in (a, b, ab))
        unsigned = EventStream(ab.t, ab.x, ab.y, np.ones(len(ab), dtype=np.int64), ab.sensor, ab.window)
        absk = event_kymograph(unsigned, 60, 4.0)
        diff = max(np.abs(kab.kx - ka.kx - kb.kx).max(), np.abs(kab.ky - ka.ky - kb.ky).max())
        bound = 64 * EPS * max(absk.kx.max(), absk.ky.max())
        c.add("kymograph linearity", diff <= bound,
              f"|K(a+b) - K(a) - K(b)| = {diff:.1e}, reassociation rounding bound {bound:.1e}")
        cancel = event_kymograph(ab.with_polarity_flipped().concat(ab), 60, 4.0)
        c.add("kymograph cancels with its negation", not cancel.kx.any() and not cancel.ky.any(), "K(s) + K(-s) == 0")

        s = random_stream(rng, 500)
        f = s.with_polarity_flipped()
        anti = (np.array_equal(event_voxel(f).data, -event_voxel(s).data)
                and np.array_equal(event_kymograph(f).kx, -event_kymograph(s).kx)
                and np.array_equal(event_kymograph(f).ky, -event_kymograph(s).ky)
                and np.array_equal(event_kymograph(f, truncate=True).kx, -event_kymograph(s, truncate=True).kx))
        c.add("polarity antisymmetry", anti, "bit-exact")

        one = EventStream.from_events([Event(250, 1, 1, 1)], (3, 3), window=(0, 600))
        v = event_voxel(one, 7).data
        on_bin = EventStream.from_events([Event(400, 3, 2, 1)], (5, 6), window=(0, 1200))
        k = event_kymograph(on_bin, 121, 10.0)
        on_centre = event_voxel(EventStream.from_events([Event(200, 0, 0, 1)], (1, 1), window=(0, 600)), 7).data
        errs = [abs(on_centre[2, 0, 0] - 1.0), abs(v[2, 1, 1] - 0.5), abs(v[3, 1, 1] - 0.5),
                abs(k.kx[40, 3] - 1.0), abs(k.kx[50, 3] - math.exp(-1)), abs(k.ky[30, 2] - math.exp(-1))]
        c.add("single-event kernels", max(errs) <= 1e-12, f"(1, 0.5, e^-1) max err {max(errs):.1e}")

        s = random_stream(rng, 150)
        vo = np.abs(event_voxel(s, 7).data - voxel_loop(zip(s.t, s.x, s.y, s.p), *s.window, 7, s.sensor)).max()
        kx, _ = kymograph_loop(zip(s.t, s.x, s.y, s.p), *s.window, 40, 4.0, s.sensor)
        ko = np.abs(event_kymograph(s, 40, 4.0).kx - kx).max()
        c.add("voxel and kymograph vs loops", vo <= 1e-12 and ko <= 1e-11, f"{vo:.1e}, {ko:.1e}")

        x = rng.normal(size=(6, 8, 8))
        pe = float(np.abs(mean_filter_3d(x, (3, 3, 3)) - pooled_mean_loop(x, (3, 3, 3))).max())
        c.add("density pooling vs triple loop", pe <= 1e-12, f"6x8x8 max err {pe:.1e}")


def test_criterion_3_cost_volumes(capsys):
    with criterion(capsys, 3, "cost volumes") as c:
        rng = np.random.default_rng(3)
        a, b = rng.normal(size=(4, 8, 8)), rng.normal(size=(4, 8, 8))
        sp = spatial_cost_pyramid(FeatureMap(a), FeatureMap(b), 2)
        es = max(float(np.abs(x - y).max()) for x, y in zip(sp.levels, spatial_cost_loop(a, b, 2)))
        c.add("spatial vs loop", es <= 1e-10, f"{es:.1e}")

        hb = [rng.normal(size=(4, 8)) for _ in range(4)]
        wb = [rng.normal(size=(4, 8)) for _ in range(4)]
        cht = temporal_cost_pyramid([FeatureMap(x, Axis.HT) for x in hb], 2)
        cwt = temporal_cost_pyramid([FeatureMap(x, Axis.WT) for x in wb], 2)
        et = max(float(np.abs(x - y).max()) for x, y in zip(cht.levels, temporal_cost_loop(hb, 2)))
        c.add("temporal vs loop", et <= 1e-10, f"{et:.1e}")
        fused = fuse_temporal(cht, cwt)
        ef = max(float(np.abs(fused.levels[m] - fuse_loop(cht.levels[m], cwt.levels[m])).max()) for m in range(2))
        c.add("fused vs loop", ef <= 1e-10, f"{ef:.1e}")

        ys, xs = np.mgrid[0:8, 0:8]
        tx, ty = (xs * 3 + 1) % 8, (ys * 5 + 2) % 8
        patch = query_neighborhood(sp, np.stack([tx, ty], axis=-1).astype(float), radius=0)
        c.add("integer queries", np.array_equal(patch.values[:, :, 0, 0], sp.levels[0][ys, xs, ty, tx]), "bit-exact")

        oob = bilinear_sample(np.ones((1, 8, 8)), np.array([[-1.0, 8.0, 3.0, 3.0, -5.0]]),
                              np.array([[3.0, 3.0, -1.0, 8.0, 20.0]]))
        c.add("out-of-bounds reads", not oob.any(), "all zero")


def exact_scene_trajectory(points, velocity):
    gt = GroundTruth(RigidSceneConfig(points=points, velocity=velocity, duration=1.0,
                                      intrinsics=CameraIntrinsics(1.0, 1.0, 0.0, 0.0), contrast_threshold=0.5,
                                      sensor=(8, 8)))
    r = gt.mid(1.0)
    return rational_linear_trajectory(gt.flow(1.0)[None], float(r[0]), uniform_knots(5, 3)), gt


def test_criterion_4_motion_in_depth(capsys):
    with criterion(capsys, 4, "motion in depth") as c:
        t0 = time.perf_counter()
        points = tuple((x, y, 10.0) for x in (-2.0, -0.5, 1.0, 2.5) for y in (-1.0, 0.0, 1.5))
        traj, gt = exact_scene_trajectory(points, (0.3, -0.2, -2.0))
        single = motion_in_depth_single(traj, 1.0)
        es = float(np.abs(single.m - 0.8).max())
        c.add("single view", es <= 1e-9 and single.valid.all(), f"max |M - 0.8| = {es:.1e}")
        multi = motion_in_depth_multiview(traj, [0.25, 0.5, 0.75, 1.0])
        em = float(np.abs(multi.m - 0.8).max())
        c.add("multi-view, 4 views", em <= 1e-3 and multi.valid.all(), f"max |M - 0.8| = {em:.1e}")

        rng = np.random.default_rng(4)
        m = rng.uniform(0.2, 3.0, 10_000)
        t1, t2, t3 = (rng.uniform(0.05, 1.0, 10_000) for _ in range(3))
        et = float(np.abs(transport_mid(transport_mid(m, t1, t2), t2, t3) - transport_mid(m, t1, t3)).max())
        c.add("transport t1 -> t2 -> t3", et <= 1e-12, f"max err {et:.1e}")
        elapsed = time.perf_counter() - t0
        c.add("runtime", elapsed < 1.0, f"{elapsed:.3f}s < 1s")


def test_criterion_5_scene_flow(capsys):
    with criterion(capsys, 5, "normalized scene flow") as c:
        cfg = RigidSceneConfig.from_dict(DEFAULT_SCENE)
        gt = GroundTruth(cfg)
        intr = cfg.intrinsics
        rows, cols, keep = gt.pixel_index()
        direct = (gt.scene_flow(1.0) @ intr.matrix.T) / gt.depth(0.0)[:, None]

        flow, mid, valid = gt.rasterize(1.0)
        s = normalized_scene_flow(FlowField.from_array(flow, valid), MiDField(mid, valid), intr)
        eg = float(np.abs(s.s[rows[keep], cols[keep]] - direct[keep]).max())
        c.add("from ground-truth flow and MiD", eg <= 1e-6, f"max component err {eg:.1e}")

        # same comparison through a trajectory fitted to the scene's correspondences
        times = np.arange(1, 9) / 8.0
        pix = np.stack([rows[keep], cols[keep]], axis=1)
        disp = gt.flow(times)[:, keep]
        corr = CorrespondenceSet(np.tile(pix, (len(times), 1)), np.repeat(times, len(pix)), disp.reshape(-1, 2),
                                 cfg.sensor)
        knots = uniform_knots(5, 3)
        weights = rational_linear_trajectory(np.zeros((1, 1, 2)), 0.8, knots).weights
        traj = fit_trajectory_lsq(corr, knots, weights)
        sf = normalized_scene_flow(optical_flow(traj, 1.0), motion_in_depth_single(traj, 1.0), intr)
        et = float(np.abs(sf.s[rows[keep], cols[keep]] - direct[keep]).max())
        c.add("from fitted trajectory", et <= 1e-6, f"max component err {et:.1e}")


def test_criterion_6_fitting(capsys, tmp_path):
    with criterion(capsys, 6, "fitting") as c:
        rng = np.random.default_rng(6)
        check = np.linspace(0.0, 1.0, 101)
        samples = np.linspace(0.0, 1.0, 13)

        knots = uniform_knots(5, 3)
        d = rng.normal(scale=5.0, size=(4, 5, 2))
        truth = check[:, None, None, None] * d[None]
        fit = fit_trajectory_lsq(CorrespondenceSet.from_dense(samples, samples[:, None, None, None] * d[None]),
                                 knots, np.ones(5))
        el = float(np.abs(eval_trajectory(fit, check) - truth).max())
        c.add("linear recovery", el <= 1e-6, f"max flow err {el:.1e}")

        worst = 0.0
        for _ in range(20):
            n = int(rng.integers(4, 9))
            kv = random_knots(rng, 3, n, min_gap=0.05)
            ctrl = rng.normal(scale=4.0, size=(n, 3, 3, 2))
            ctrl[0] = 0.0
            tr = Trajectory(ctrl, rng.uniform(0.3, 3.0, n), kv)
            ts = np.linspace(0.0, 1.0, 2 * n + 5)
            fit = fit_trajectory_lsq(CorrespondenceSet.from_dense(ts, eval_trajectory(tr, ts)), kv, tr.weights)
            worst = max(worst, float(np.abs(eval_trajectory(fit, check) - eval_trajectory(tr, check)).max()))
        c.add("random cubic recovery", worst <= 1e-6, f"max flow err {worst:.1e} over 20 rational cubics")

        noisy = eval_trajectory(fit, samples) + rng.normal(scale=0.5, size=(len(samples), 3, 3, 2))
        first = fit_trajectory_lsq(CorrespondenceSet.from_dense(samples, noisy), fit.knots, fit.weights)
        second = fit_trajectory_lsq(CorrespondenceSet.from_dense(samples, eval_trajectory(first, samples)),
                                    fit.knots, fit.weights)
        ei = float(np.abs(second.control - first.control).max())
        c.add("idempotent refit", ei <= 1e-9, f"max control change {ei:.1e}")

        s = tmp_path / "s"
        assert main(["synth", "--out", str(s)]) == 0
        assert main(["fit", "--events", f"{s}.csv", "--manifest", f"{s}_manifest.json", "--gt", f"{s}_flow.flo",
                     "--out", str(tmp_path / "r")]) == 0
        hist = json.loads((tmp_path / "r_fit.json").read_text())["epe_history"]
        mono = len(hist) == 6 and all(b <= a for a, b in zip(hist, hist[1:]))
        c.add("default refinement monotone", mono, "EPE " + ", ".join(f"{e:.3f}" for e in hist))


def top_k_oracle(profile, n):
    order = sorted(range(len(profile)), key=lambda i: (-profile[i], i))
    return sorted(i + 1 for i in order[:n])


def test_criterion_7_density_adaptation(capsys):
    with criterion(capsys, 7, "density adaptation") as c:
        rng = np.random.default_rng(7)
        invariant_ok = anchors_ok = True
        for trial in range(1000):
            p = int(rng.integers(1, 5))
            n = int(rng.integers(p + 1, p + 7))
            n_a = int(rng.integers(n, n + 12))
            kind = trial % 4
            if kind == 0:
                prof = rng.uniform(0.0, 1.0, n_a)
            elif kind == 1:
                prof = rng.integers(0, 3, n_a).astype(float)  # many ties
            elif kind == 2:
                prof = rng.exponential(50.0, n_a)  # wide spread
            else:
                prof = np.zeros(n_a)
            res = density_adapt(prof, n, p)
            k = res.knots.knots
            invariant_ok &= (len(k) == n + p + 1 and np.all(k[:p + 1] == 0.0) and np.all(k[-p - 1:] == 1.0)
                             and np.all(np.diff(k) >= 0) and np.all((k[p + 1:n] > 0) & (k[p + 1:n] < 1))
                             and np.all(res.weights > 0) and abs(res.weights.sum() - 1.0) <= 1e-12
                             and np.all(np.diff(res.anchor_times) > 0))
            anchors_ok &= res.anchor_indices.tolist() == top_k_oracle(prof.tolist(), n)
        c.add("clamped-knot invariants", invariant_ok, "1000 random profiles")
        c.add("top-k anchors", anchors_ok, "match sort-based oracle exactly")
        worst = 0.0
        for n in range(2, 9):
            res = density_adapt(np.full(12, 3.7), n, 1)
            worst = max(worst, float(np.abs(res.weights - 1.0 / n).max()))
        c.add("uniform profile weights", worst <= 1e-12, f"max |w - 1/n| = {worst:.1e}")


def run_round_trip(d):
    s, f, m = d / "s", d / "f", d / "m"
    codes = [main(["synth", "--out", str(s)]),
             main(["fit", "--lsq", f"{s}_corr.json", "--out", str(f)]),
             main(["motion", "--traj", f"{f}_traj.emok", "--out", str(m), "--multiview"]),
             main(["eval", "--pred", str(m), "--gt", str(s)])]
    return codes, json.loads((d / "m_metrics.json").read_text())


def test_criterion_8_cli_round_trip(capsys, tmp_path):
    with criterion(capsys, 8, "CLI round trip") as c:
        t0 = time.perf_counter()
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        codes_a, rep = run_round_trip(tmp_path / "a")
        codes_b, _ = run_round_trip(tmp_path / "b")
        elapsed = time.perf_counter() - t0
        c.add("exit codes", codes_a == [0] * 4 and codes_b == [0] * 4, "")
        c.add("epe", rep["epe"] <= 1e-6, f"{rep['epe']:.1e}")
        c.add("logmid", rep["logmid"] <= 1e-3, f"{rep['logmid']:.1e}")
        files = sorted(p.name for p in (tmp_path / "a").iterdir())
        same = files == sorted(p.name for p in (tmp_path / "b").iterdir()) and all(
            (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in files)
        c.add("reruns byte-identical", same, f"{len(files)} files")
        c.add("runtime", elapsed < 30.0, f"{elapsed:.2f}s for two runs < 30s")


THROUGHPUT_SCRIPT = """
import time, numpy as np
from emotive.events import EventStream
from emotive.projection import event_kymograph
rng = np.random.default_rng(9)
n = 1_000_000
s = EventStream(np.sort(rng.integers(0, 1_000_000, n)), rng.integers(0, 320, n), rng.integers(0, 240, n),
                rng.choice([-1, 1], n), (240, 320), (0, 1_000_000))
times = []
for _ in range(3):
    t0 = time.perf_counter()
    k = event_kymograph(s, 120)
    times.append(time.perf_counter() - t0)
assert k.kx.shape == (120, 320) and k.ky.shape == (120, 240)
print(sorted(times)[1])
"""


def test_criterion_9_throughput(capsys):
    with criterion(capsys, 9, "kymograph throughput") as c:
        env = dict(os.environ, OMP_NUM_THREADS="1", OPENBLAS_NUM_THREADS="1", MKL_NUM_THREADS="1")
        res = subprocess.run([sys.executable, "-c", THROUGHPUT_SCRIPT], capture_output=True, text=True, env=env,
                             check=True)
        median = float(res.stdout.strip())
        c.add("1e6 events, 120 bins, 240x320, one thread", median < 1.0, f"median of 3 runs {median:.3f}s < 1s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))

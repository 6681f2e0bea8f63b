"""File formats: float container, Middlebury ``.flo``, PGM/PPM previews, trajectory and correspondence files."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .fitting import CorrespondenceSet
from .nurbs import KnotVector, Trajectory

CONTAINER_MAGIC = "EMOK1"
FLO_MAGIC = b"PIEH"
FLO_UNKNOWN = 1e10
FLO_UNKNOWN_THRESH = 1e9


# ---------------------------------------------------------------------------
# float container: "EMOK1 <ndim> <dims...> <meta-len>\n" + meta JSON + LE payload


def dumps_container(data, meta=None, dtype="<f4") -> bytes:
    """Serialize an array. ``dtype`` is ``"<f4"`` (default) or ``"<f8"``; it is recorded in the meta."""
    a = np.asarray(data, dtype=np.float64)
    meta = dict(meta or {})
    if dtype != "<f4":
        meta["dtype"] = np.dtype(dtype).str
    blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    head = " ".join([CONTAINER_MAGIC, str(a.ndim), *map(str, a.shape), str(len(blob))]) + "\n"
    return head.encode("ascii") + blob + a.astype(dtype).tobytes()


def loads_container(buf: bytes):
    """Inverse of :func:`dumps_container`; returns ``(float64 array, meta)``."""
    nl = buf.index(b"\n")
    fields = buf[:nl].decode("ascii").split()
    if not fields or fields[0] != CONTAINER_MAGIC:
        raise ValueError("not an EMOK1 container")
    ndim = int(fields[1])
    if len(fields) != ndim + 3:
        raise ValueError("corrupt container header")
    shape = tuple(int(v) for v in fields[2:2 + ndim])
    mlen = int(fields[-1])
    meta = json.loads(buf[nl + 1: nl + 1 + mlen].decode("utf-8"))
    dtype = np.dtype(meta.get("dtype", "<f4"))
    payload = buf[nl + 1 + mlen:]
    count = int(np.prod(shape)) if shape else 1
    if len(payload) != count * dtype.itemsize:
        raise ValueError("container payload size does not match header")
    return np.frombuffer(payload, dtype=dtype).astype(np.float64).reshape(shape), meta


def write_container(path, data, meta=None, dtype="<f4"):
    Path(path).write_bytes(dumps_container(data, meta, dtype))


def read_container(path):
    return loads_container(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# Middlebury .flo


def dumps_flo(u, v, valid=None) -> bytes:
    """``PIEH`` + int32 W, H + interleaved float32 ``(u, v)``; invalid pixels hold 1e10."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    h, w = u.shape
    uv = np.stack([u, v], axis=-1)
    if valid is not None:
        uv = np.where(np.asarray(valid, dtype=bool)[..., None], uv, FLO_UNKNOWN)
    return FLO_MAGIC + np.array([w, h], dtype="<i4").tobytes() + uv.astype("<f4").tobytes()


def loads_flo(buf: bytes):
    """Returns ``(u, v, valid)``; components above 1e9 in magnitude mark unknown flow."""
    if buf[:4] != FLO_MAGIC:
        raise ValueError("bad .flo magic")
    w, h = np.frombuffer(buf[4:12], dtype="<i4")
    data = np.frombuffer(buf[12:], dtype="<f4")
    if data.size != 2 * w * h:
        raise ValueError(".flo payload size does not match header")
    uv = data.reshape(h, w, 2).astype(np.float64)
    valid = np.all(np.abs(uv) < FLO_UNKNOWN_THRESH, axis=-1) & np.all(np.isfinite(uv), axis=-1)
    return np.where(valid, uv[..., 0], 0.0), np.where(valid, uv[..., 1], 0.0), valid


def write_flo(path, u, v, valid=None):
    Path(path).write_bytes(dumps_flo(u, v, valid))


def read_flo(path):
    return loads_flo(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# previews


def write_pgm(path, image):
    """8-bit binary PGM, min-max normalized; the scale goes to ``<path>.json``."""
    img = np.asarray(image, dtype=np.float64)
    finite = np.isfinite(img)
    lo = float(img[finite].min()) if finite.any() else 0.0
    hi = float(img[finite].max()) if finite.any() else 0.0
    span = hi - lo
    scaled = np.zeros(img.shape) if span == 0 else (np.where(finite, img, lo) - lo) / span
    pix = np.clip(np.floor(scaled * 255.0 + 0.5), 0, 255).astype(np.uint8)
    h, w = pix.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes())
    Path(str(path) + ".json").write_text(json.dumps({"min": lo, "max": hi}, sort_keys=True) + "\n")


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    magic, w, h, _ = buf.split(maxsplit=3)[:4]
    if magic != b"P5":
        raise ValueError("not a binary PGM")
    w, h = int(w), int(h)
    return np.frombuffer(buf[len(buf) - w * h:], dtype=np.uint8).reshape(h, w)


def write_ppm(path, rgb):
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + rgb.tobytes())


def make_colorwheel() -> np.ndarray:
    """Middlebury colour wheel: 55 hues over RY, YG, GC, CB, BM, MR segments."""
    ry, yg, gc, cb, bm, mr = 15, 6, 4, 11, 13, 6
    wheel = np.zeros((ry + yg + gc + cb + bm + mr, 3))
    col = 0
    wheel[0:ry, 0] = 255
    wheel[0:ry, 1] = np.floor(255 * np.arange(ry) / ry)
    col += ry
    wheel[col:col + yg, 0] = 255 - np.floor(255 * np.arange(yg) / yg)
    wheel[col:col + yg, 1] = 255
    col += yg
    wheel[col:col + gc, 1] = 255
    wheel[col:col + gc, 2] = np.floor(255 * np.arange(gc) / gc)
    col += gc
    wheel[col:col + cb, 1] = 255 - np.floor(255 * np.arange(cb) / cb)
    wheel[col:col + cb, 2] = 255
    col += cb
    wheel[col:col + bm, 2] = 255
    wheel[col:col + bm, 0] = np.floor(255 * np.arange(bm) / bm)
    col += bm
    wheel[col:col + mr, 2] = 255 - np.floor(255 * np.arange(mr) / mr)
    wheel[col:col + mr, 0] = 255
    return wheel


def flow_to_color(u, v, max_flow=None) -> np.ndarray:
    """RGB rendering on the colour wheel; magnitude saturates at ``max_flow``.

    ``max_flow`` defaults to the 98th percentile of the flow magnitude.
    """
    u = np.nan_to_num(np.asarray(u, dtype=np.float64))
    v = np.nan_to_num(np.asarray(v, dtype=np.float64))
    mag = np.hypot(u, v)
    if max_flow is None:
        max_flow = float(np.percentile(mag, 98)) if mag.size else 1.0
    max_flow = max_flow if max_flow > 0 else 1.0
    u, v, rad = u / max_flow, v / max_flow, mag / max_flow
    wheel = make_colorwheel()
    ncols = wheel.shape[0]
    a = np.arctan2(-v, -u) / np.pi
    fk = (a + 1) / 2 * (ncols - 1)
    k0 = np.floor(fk).astype(int)
    k1 = (k0 + 1) % ncols
    f = fk - k0
    img = np.zeros(u.shape + (3,), dtype=np.uint8)
    for i in range(3):
        col = (1 - f) * wheel[k0, i] / 255.0 + f * wheel[k1, i] / 255.0
        inside = rad <= 1
        col = np.where(inside, 1 - rad * (1 - col), col * 0.75)
        img[..., i] = np.floor(255 * col).astype(np.uint8)
    return img


# ---------------------------------------------------------------------------
# trajectories and correspondences


def write_trajectory(path, traj: Trajectory, extra=None):
    """Trajectory container (float64 payload ``(n, H_D, W_D, 2)``)."""
    n, h, w, _ = traj.control.shape
    meta = {"kind": "trajectory", "n": n, "p": traj.degree, "H_D": h, "W_D": w,
            "knots": traj.knots.knots.tolist(), "weights": traj.weights.tolist()}
    meta.update(extra or {})
    write_container(path, traj.control, meta, dtype="<f8")


def read_trajectory(path):
    data, meta = read_container(path)
    if meta.get("kind") != "trajectory":
        raise ValueError(f"{path} is not a trajectory container")
    traj = Trajectory(data, meta["weights"], KnotVector(meta["knots"], meta["p"]))
    return traj, meta


CORR_SCHEMA = "emotive.correspondences/1"


def write_correspondences(path, corr: CorrespondenceSet, extra=None):
    doc = {"schema": CORR_SCHEMA, "shape": list(corr.shape), "pixels": corr.pixels.tolist(),
           "times": corr.times.tolist(), "displacements": corr.displacements.tolist()}
    if corr.weights is not None:
        doc["sample_weights"] = corr.weights.tolist()
    doc.update(extra or {})
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n")


def read_correspondences(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != CORR_SCHEMA:
        raise ValueError(f"{path}: expected schema {CORR_SCHEMA}")
    corr = CorrespondenceSet(np.array(doc["pixels"], dtype=np.int64).reshape(-1, 2), doc["times"],
                             np.array(doc["displacements"], dtype=np.float64).reshape(-1, 2),
                             tuple(doc["shape"]), doc.get("sample_weights"))
    return corr, doc

"""File formats: PFM, 8-bit PNG, OBJ, JSON and the scene manifest."""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from mvinpaint.camera import Camera, DepthMap, View, load_camera


def write_pfm(path, data: np.ndarray) -> None:
    """Write a 1- or 3-channel float map as little-endian PFM (rows bottom-up)."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        tag = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        tag = b"PF"
    else:
        raise ValueError(f"PFM needs H x W or H x W x 3, got {data.shape}")
    h, w = data.shape[:2]
    body = np.ascontiguousarray(np.flipud(data)).astype("<f4")
    with open(path, "wb") as f:
        f.write(tag + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        f.write(body.tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        tag = f.readline().strip()
        if tag == b"PF":
            channels = 3
        elif tag == b"Pf":
            channels = 1
        else:
            raise ValueError(f"{path}: not a PFM file")
        dims = f.readline()
        while dims.startswith(b"#"):
            dims = f.readline()
        m = re.match(rb"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise ValueError(f"{path}: malformed PFM header")
        w, h = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        data = np.frombuffer(f.read(w * h * channels * 4), dtype=dtype)
    if data.size != w * h * channels:
        raise ValueError(f"{path}: truncated PFM data")
    shape = (h, w, 3) if channels == 3 else (h, w)
    return np.flipud(data.reshape(shape)).astype(np.float32)


def write_png(path, img: np.ndarray) -> None:
    """Write floats in [0, 1] (or bools) as 8-bit PNG."""
    img = np.asarray(img)
    if img.dtype == bool:
        arr = img.astype(np.uint8) * 255
    elif img.dtype == np.uint8:
        arr = img
    else:
        arr = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(arr).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    """Read a PNG as float RGB in [0, 1]."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0


def read_mask(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("L")) > 127


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_indexed_png(path, index: np.ndarray, n_colors: int) -> None:
    """Palette PNG of a small integer map; -1 maps to the last palette entry."""
    import matplotlib

    index = np.asarray(index)
    cmap = matplotlib.colormaps["tab10"]
    palette = []
    for i in range(255):
        r, g, b, _ = cmap(i % 10)
        palette += [int(r * 255), int(g * 255), int(b * 255)]
    palette += [0, 0, 0]
    arr = np.where(index < 0, 255, index % 255).astype(np.uint8)
    im = Image.fromarray(arr, mode="P")
    im.putpalette(palette)
    im.save(path, format="PNG")


def read_indexed_png(path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im).astype(np.int64)
    arr[arr == 255] = -1
    return arr


def write_obj(path, vertices, faces, colors=None) -> None:
    lines = []
    for i, v in enumerate(vertices):
        if colors is None:
            lines.append("v %.9g %.9g %.9g" % tuple(v))
        else:
            lines.append("v %.9g %.9g %.9g %.6g %.6g %.6g" % (*v, *colors[i]))
    lines += ["f %d %d %d" % tuple(f + 1) for f in faces]
    Path(path).write_text("\n".join(lines) + "\n")


def read_obj(path):
    verts, colors, faces = [], [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(x) for x in parts[1:4]])
            if len(parts) >= 7:
                colors.append([float(x) for x in parts[4:7]])
        elif parts[0] == "f":
            faces.append([int(p.split("/")[0]) - 1 for p in parts[1:4]])
    colors = np.array(colors) if len(colors) == len(verts) and colors else None
    return np.array(verts, float).reshape(-1, 3), np.array(faces, int).reshape(-1, 3), colors


def load_manifest(path) -> list:
    """Load a scene manifest into a list of :class:`View`.

    The manifest is a JSON list of records ``{image, mask, depth, camera,
    inpainted}`` with file paths relative to the manifest.  ``depth`` and
    ``camera`` may be null before geometry estimation.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest: file not found: {path}")
    records = json.loads(path.read_text())
    if not isinstance(records, list) or not records:
        raise ValueError("manifest: expected a non-empty list of view records")
    root = path.parent
    views = []
    for i, rec in enumerate(records):
        try:
            image = read_png(root / rec["image"])
            mask = read_mask(root / rec["mask"]) if rec.get("mask") else np.zeros(image.shape[:2], bool)
            cam = load_camera(root / rec["camera"]) if rec.get("camera") else None
            depth = None
            if rec.get("depth"):
                d = read_pfm(root / rec["depth"]).astype(np.float64)
                depth = DepthMap(d, np.isfinite(d) & (d > 0))
        except (KeyError, OSError, ValueError) as exc:
            raise ValueError(f"manifest: view {i}: {exc}") from exc
        views.append(View(image, mask, bool(rec.get("inpainted", False)), cam, depth))
    return views


def save_manifest(path, views, prefix: str = "") -> None:
    """Write views and their files next to ``path`` in manifest layout."""
    from mvinpaint.camera import save_camera

    path = Path(path)
    root = path.parent
    root.mkdir(parents=True, exist_ok=True)
    records = []
    for i, v in enumerate(views):
        stem = f"{prefix}{i:03d}"
        rec = {"image": f"{stem}_image.png", "mask": f"{stem}_mask.png", "inpainted": bool(v.inpainted),
               "camera": None, "depth": None}
        write_png(root / rec["image"], v.image)
        write_png(root / rec["mask"], v.mask)
        if v.camera is not None:
            rec["camera"] = f"{stem}_camera.json"
            save_camera(v.camera, root / rec["camera"])
        if v.depth is not None:
            rec["depth"] = f"{stem}_depth.pfm"
            write_pfm(root / rec["depth"], np.where(v.depth.valid, v.depth.values, 0.0))
        records.append(rec)
    path.write_text(json.dumps(records, indent=2) + "\n")

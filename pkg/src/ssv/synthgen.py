"""Synthetic scenes with known face boxes, and on-disk corpora built from them.

Faces are textured ellipses (fine noise plus dark eye and mouth blobs) on
smooth backgrounds. Texture forces small coding blocks and dense bins inside
the face, which is the structure the detector is meant to pick up.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import zoom

from .codec.encoder import bitstream_from_leaves, code_picture
from .detector.boxes import BBox
from .features import build_feature_image
from .pnm import write_atomic, write_pgm, write_ppm
from .scramble import ScrambleKey, mix64
from .syntax import parse_syntax

BACKGROUNDS = ("flat", "gradient", "noise")
QP_SET = (22, 27, 32, 37)
MIN_FACE, MAX_FACE = 24, 96
FACE_NOISE = 50.0
GRAD_SLOPE = 0.2
NOISE_AMP = 20.0
NOISE_GRID = 4
MANIFEST_FIELDS = ("id", "split", "qp", "scrambled", "image", "bitstream", "features",
                   "annotations")


@dataclass(frozen=True)
class FaceSpec:
    cx: float
    cy: float
    w: int
    h: int
    texture_seed: int


@dataclass(frozen=True)
class SceneSpec:
    width: int = 224
    height: int = 224
    background: str = "flat"
    background_seed: int = 0
    faces: tuple[FaceSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.background not in BACKGROUNDS:
            raise ValueError(f"background must be one of {BACKGROUNDS}")
        for f in self.faces:
            if not (MIN_FACE <= f.w <= MAX_FACE and MIN_FACE <= f.h <= MAX_FACE):
                raise ValueError("face sides must lie in [24, 96] pixels")
            if (f.cx - f.w / 2 < 0 or f.cy - f.h / 2 < 0
                    or f.cx + f.w / 2 > self.width or f.cy + f.h / 2 > self.height):
                raise ValueError("face box must lie inside the image")
        for i, a in enumerate(self.faces):
            for b in self.faces[i + 1:]:
                if _overlap(a, b, 0):
                    raise ValueError("faces must not overlap")
        cells = {(int(f.cx) // 16, int(f.cy) // 16) for f in self.faces}
        if len(cells) != len(self.faces):
            raise ValueError("at most one face centre per 16x16 region")


def _overlap(a, b, margin):
    return (abs(a.cx - b.cx) * 2 < a.w + b.w + 2 * margin
            and abs(a.cy - b.cy) * 2 < a.h + b.h + 2 * margin)


def _background(spec, rng):
    H, W = spec.height, spec.width
    if spec.background == "flat":
        return np.full((H, W), rng.uniform(40, 215))
    if spec.background == "gradient":
        yy, xx = np.mgrid[0:H, 0:W]
        base = rng.uniform(70, 180)
        gx, gy = rng.uniform(-GRAD_SLOPE, GRAD_SLOPE, size=2)
        return base + gx * (xx - W / 2) + gy * (yy - H / 2)
    coarse = rng.uniform(-1, 1, size=(NOISE_GRID, NOISE_GRID))
    field_ = zoom(coarse, (H / NOISE_GRID, W / NOISE_GRID), order=3, mode="nearest")[:H, :W]
    return rng.uniform(80, 170) + NOISE_AMP * field_


def _paint_face(img, face):
    rng = np.random.default_rng(face.texture_seed)
    H, W = img.shape
    x0, x1 = int(np.floor(face.cx - face.w / 2)), int(np.ceil(face.cx + face.w / 2))
    y0, y1 = int(np.floor(face.cy - face.h / 2)), int(np.ceil(face.cy + face.h / 2))
    yy, xx = np.mgrid[y0:y1, x0:x1]
    u = (xx + 0.5 - face.cx) / (face.w / 2)
    v = (yy + 0.5 - face.cy) / (face.h / 2)
    inside = u * u + v * v <= 1.0
    tone = rng.uniform(110, 210)
    patch = tone + rng.normal(0, FACE_NOISE, size=u.shape)

    def blob(cu, cv, ru, rv, level):
        m = ((u - cu) / ru) ** 2 + ((v - cv) / rv) ** 2 <= 1.0
        patch[m] = level + rng.normal(0, 10, size=int(m.sum()))

    dark = rng.uniform(15, 60)
    eye_v = rng.uniform(-0.35, -0.15)
    blob(-0.38, eye_v, 0.18, 0.11, dark)
    blob(0.38, eye_v, 0.18, 0.11, dark)
    blob(0.0, rng.uniform(0.35, 0.5), 0.35, 0.09, dark + 20)
    region = img[y0:y1, x0:x1]
    region[inside] = patch[inside]


def render_scene(spec: SceneSpec):
    """Return ``(image, boxes)``: uint8 luma and image-relative face boxes."""
    rng = np.random.default_rng(spec.background_seed)
    img = _background(spec, rng)
    for f in spec.faces:
        _paint_face(img, f)
    img = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
    boxes = [BBox(f.cx / spec.width, f.cy / spec.height, f.w / spec.width, f.h / spec.height)
             for f in spec.faces]
    return img, boxes


def random_scene(rng, width=224, height=224, max_faces=4, background=None):
    """Draw a valid SceneSpec. Placement retries until faces fit without overlap."""
    bg = background or BACKGROUNDS[int(rng.integers(len(BACKGROUNDS)))]
    top = min(MAX_FACE, width - 4, height - 4)
    if top < MIN_FACE:
        raise ValueError(f"a {width}x{height} picture cannot hold a face")
    want = int(rng.integers(1, max_faces + 1))
    faces = []
    for _ in range(want * 30):
        if len(faces) == want:
            break
        w = int(rng.integers(MIN_FACE, top + 1))
        h = int(np.clip(round(w * rng.uniform(1.0, 1.3)), MIN_FACE, top))
        cx = float(rng.integers(w // 2 + 1, width - w // 2 - 1)) + (w % 2) * 0.5
        cy = float(rng.integers(h // 2 + 1, height - h // 2 - 1)) + (h % 2) * 0.5
        cand = FaceSpec(cx, cy, w, h, int(rng.integers(2 ** 63)))
        if all(not _overlap(cand, f, 4) for f in faces):
            faces.append(cand)
    return SceneSpec(width, height, bg, int(rng.integers(2 ** 63)), tuple(faces))


def scene_for(seed, index, width=224, height=224):
    return random_scene(np.random.default_rng([seed, index]), width, height)


def default_key(seed) -> ScrambleKey:
    return ScrambleKey(mix64(seed ^ 0x5C4A3B1E00000000))


def split_of(index, test_every=5):
    return "test" if index % test_every == test_every - 1 else "train"


def write_annotations(path, boxes, scores=None):
    lines = []
    for i, b in enumerate(boxes):
        vals = [b.cx, b.cy, b.w, b.h] + ([] if scores is None else [scores[i]])
        lines.append(" ".join(f"{v:.6f}" for v in vals))
    write_atomic(path, ("\n".join(lines) + ("\n" if lines else "")).encode())


def read_annotations(path):
    """Return ``(boxes, scores)``; scores is None when the file has none."""
    boxes, scores = [], []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) not in (4, 5):
                raise ValueError(f"{path}:{n}: expected 'cx cy w h [score]'")
            v = [float(p) for p in parts]
            boxes.append(BBox(*v[:4]))
            if len(v) == 5:
                scores.append(v[4])
    if scores and len(scores) != len(boxes):
        raise ValueError(f"{path}: score column present on some lines only")
    return boxes, (scores or None)


def build_corpus(n_images, seed, out_dir, qp_set=QP_SET, scrambled="both", key=None,
                 entropy_mode="adaptive", width=224, height=224, test_every=5):
    """Render, encode and featurise ``n_images`` scenes into ``out_dir``.

    Returns the manifest path. Scrambled variants use ``key`` or a key
    derived from ``seed``.
    """
    if scrambled not in ("yes", "no", "both"):
        raise ValueError("scrambled must be 'yes', 'no' or 'both'")
    variants = {"no": (False,), "yes": (True,), "both": (False, True)}[scrambled]
    key = key or default_key(seed)
    root = Path(out_dir)
    for sub in ("images", "annotations", "bitstreams", "syntax", "features"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(n_images):
        sid = f"{i:05d}"
        img, boxes = render_scene(scene_for(seed, i, width, height))
        write_pgm(root / "images" / f"{sid}.pgm", img)
        write_annotations(root / "annotations" / f"{sid}.txt", boxes)
        for qp in qp_set:
            leaves, _ = code_picture(img, qp)
            for scr in variants:
                stem = f"{sid}_q{qp}_{'s' if scr else 'p'}"
                bs = bitstream_from_leaves(leaves, width, height, qp,
                                           key if scr else None, entropy_mode)
                write_atomic(root / "bitstreams" / f"{stem}.ssv", bs.to_bytes())
                smap = parse_syntax(bs)
                write_atomic(root / "syntax" / f"{stem}.csv", smap.to_csv().encode())
                write_ppm(root / "features" / f"{stem}.ppm", build_feature_image(smap))
                rows.append({"id": sid, "split": split_of(i, test_every), "qp": qp,
                             "scrambled": int(scr), "image": f"images/{sid}.pgm",
                             "bitstream": f"bitstreams/{stem}.ssv",
                             "features": f"features/{stem}.ppm",
                             "annotations": f"annotations/{sid}.txt"})
    manifest = root / "manifest.csv"
    with open(str(manifest) + ".tmp", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    os.replace(str(manifest) + ".tmp", manifest)
    return manifest


def read_manifest(path, split=None, qp=None, scrambled=None):
    """Manifest rows with artefact paths resolved against the manifest's folder."""
    base = Path(path).parent
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"manifest is missing columns: {sorted(missing)}")
        for r in reader:
            r["qp"] = int(r["qp"])
            r["scrambled"] = bool(int(r["scrambled"]))
            if split is not None and r["split"] != split:
                continue
            if qp is not None and r["qp"] != qp:
                continue
            if scrambled is not None and r["scrambled"] != scrambled:
                continue
            for k in ("image", "bitstream", "features", "annotations"):
                r[k] = base / r[k]
            out.append(r)
    return out

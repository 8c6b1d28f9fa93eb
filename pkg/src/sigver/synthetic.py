"""Seeded synthetic signature corpus.

A stand-in for restricted signature databases, meant to exercise the
pipeline rather than reproduce published error rates. Each user owns a
stroke model (chains of cubic Bezier segments, a pen width and a slant).
Genuine samples redraw that model with small jitter; skilled forgeries
redraw a perturbed copy of it with larger jitter; simple forgeries are
unrelated stroke models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from .errors import ConfigError
from .protocol import Corpus, Sample

SUPERSAMPLE = 4
_BEZIER_STEPS = 24


@dataclass(frozen=True)
class GeneratorParams:
    genuine_jitter: float = 0.010     # control-point sd, fraction of signature box
    forgery_shift: float = 0.045      # sd of the forger's systematic deviation
    forgery_jitter: float = 0.018
    pose_jitter: float = 0.03         # scale / translation variability
    rotation_deg: float = 2.0
    noise_sd: float = 3.0


@dataclass
class StrokeModel:
    strokes: list[np.ndarray]   # each (3k+1, 2) control points in [0, 1]^2, (x, y)
    width: float                # pen width in output pixels
    slant: float                # horizontal shear

    def perturbed(self, rng: np.random.Generator, sd: float, width_sd: float = 0.0, slant_sd: float = 0.0):
        return StrokeModel(
            [s + rng.normal(0.0, sd, s.shape) for s in self.strokes],
            max(0.8, self.width * (1.0 + rng.normal(0.0, width_sd))),
            self.slant + rng.normal(0.0, slant_sd),
        )


def random_stroke_model(rng: np.random.Generator) -> StrokeModel:
    strokes = []
    n_strokes = int(rng.integers(2, 4))
    x0 = 0.0
    for k in range(n_strokes):
        n_seg = int(rng.integers(2, 5))
        span = rng.uniform(0.25, 0.5)
        xs = np.linspace(x0, x0 + span, n_seg + 1)
        anchors = np.column_stack([xs, rng.uniform(0.2, 0.8, n_seg + 1)])
        pts = [anchors[0]]
        for a, b in zip(anchors[:-1], anchors[1:]):
            pts.append(a + rng.normal(0.0, 0.25, 2))
            pts.append(b + rng.normal(0.0, 0.25, 2))
            pts.append(b)
        strokes.append(np.array(pts))
        x0 = x0 + span * rng.uniform(0.5, 1.0)
    # normalize to the unit box so every user fills a comparable area
    allpts = np.concatenate(strokes)
    lo, hi = allpts.min(axis=0), allpts.max(axis=0)
    strokes = [(s - lo) / np.maximum(hi - lo, 1e-6) for s in strokes]
    return StrokeModel(strokes, float(rng.uniform(1.2, 2.6)), float(rng.uniform(-0.3, 0.3)))


def _bezier_chain(ctrl: np.ndarray) -> np.ndarray:
    t = np.linspace(0.0, 1.0, _BEZIER_STEPS)[:, None]
    basis = np.hstack([(1 - t) ** 3, 3 * t * (1 - t) ** 2, 3 * t ** 2 * (1 - t), t ** 3])
    segs = [basis @ ctrl[i:i + 4] for i in range(0, len(ctrl) - 3, 3)]
    return np.concatenate(segs)


def render(model: StrokeModel, height: int, width: int, rng: np.random.Generator,
           params: GeneratorParams) -> np.ndarray:
    """Rasterize a stroke model onto a light page; returns uint8 (height, width)."""
    s = SUPERSAMPLE
    box_w = width * 0.7 * (1.0 + rng.normal(0.0, params.pose_jitter))
    box_h = height * 0.55 * (1.0 + rng.normal(0.0, params.pose_jitter))
    theta = np.deg2rad(rng.normal(0.0, params.rotation_deg))
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    offset = np.array([width / 2, height / 2]) + rng.normal(0.0, params.pose_jitter, 2) * [width, height]
    canvas = Image.new("L", (width * s, height * s), 0)
    draw = ImageDraw.Draw(canvas)
    pen = max(1, int(round(model.width * s)))
    for ctrl in model.strokes:
        pts = _bezier_chain(ctrl) - 0.5
        pts[:, 0] -= model.slant * pts[:, 1]
        pts = pts * [box_w, box_h]
        pts = pts @ rot.T + offset
        flat = [(float(x * s), float(y * s)) for x, y in pts]
        draw.line(flat, fill=255, width=pen, joint="curve")
        r = pen / 2
        for x, y in (flat[0], flat[-1]):
            draw.ellipse((x - r, y - r, x + r, y + r), fill=255)
    ink = np.asarray(canvas.reduce(s), dtype=np.float64) / 255.0
    page = rng.uniform(232.0, 248.0)
    ink_level = rng.uniform(20.0, 60.0)
    img = page - ink * (page - ink_level) + rng.normal(0.0, params.noise_sd, ink.shape)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_synthetic_corpus(n_users: int, n_genuine: int, n_skilled: int, height: int = 110,
                              width: int = 160, seed: int = 0, n_simple: int = 0,
                              params: GeneratorParams | None = None) -> Corpus:
    """Deterministic in-memory corpus; users are numbered from 1."""
    if n_users < 2:
        raise ConfigError("synthetic corpus needs at least 2 users")
    if n_genuine < 1 or n_skilled < 0 or n_simple < 0:
        raise ConfigError("sample counts must be non-negative (genuine >= 1)")
    if height < 16 or width < 16:
        raise ConfigError("image size must be at least 16x16")
    params = params or GeneratorParams()
    samples, images = [], {}
    for user in range(1, n_users + 1):
        rng = np.random.default_rng([seed, user])
        model = random_stroke_model(rng)
        forger = model.perturbed(rng, params.forgery_shift, width_sd=0.2, slant_sd=0.08)
        batches = [
            ("genuine", n_genuine, lambda r: model.perturbed(r, params.genuine_jitter, 0.05, 0.01)),
            ("skilled", n_skilled, lambda r: forger.perturbed(r, params.forgery_jitter, 0.08, 0.02)),
            ("simple", n_simple, lambda r: random_stroke_model(r)),
        ]
        for label, count, make in batches:
            for i in range(1, count + 1):
                r = np.random.default_rng([seed, user, 1 + ("genuine", "skilled", "simple").index(label), i])
                sample = Sample(user, label, i)
                images[sample.key] = render(make(r), height, width, r, params)
                samples.append(sample)
    return Corpus(samples, images=images, provenance={"generator": "synthetic-bezier", "seed": str(seed)})

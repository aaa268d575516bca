"""Seeded procedural 28x28 digit corpus for fully offline runs.

Glyphs for '0'..'9' are rasterized from a pinned list of bundled fonts and
pushed through per-sample random affine + elastic warps, stroke-weight
jitter, blur and pixel noise. The result is a grayscale digit task with
within-class style substructure (one style per font) whose difficulty at
tiny label budgets is tuned to sit near the handwritten-digit benchmark.

Generation is a pure function of (config, seed); pixels are quantized to
uint8 so a corpus round-trips bit-exactly through IDX files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.ndimage as ndi
from PIL import Image, ImageDraw, ImageFont

from .datasets import ImageDataset, make_dataset

# Pinned style set: digit-bearing faces shipped with matplotlib.
FONT_FILES = (
    "DejaVuSans.ttf",
    "DejaVuSans-Bold.ttf",
    "DejaVuSans-Oblique.ttf",
    "DejaVuSansMono.ttf",
    "DejaVuSansMono-Bold.ttf",
    "DejaVuSerif.ttf",
    "DejaVuSerif-Bold.ttf",
    "DejaVuSerif-Italic.ttf",
    "STIXGeneral.ttf",
    "STIXGeneralBol.ttf",
    "cmr10.ttf",
    "cmss10.ttf",
    "cmb10.ttf",
    "cmtt10.ttf",
)

_PROTO_SIZE = 40  # prototype canvas, warped down to 28x28


def _font_dir() -> Path:
    import matplotlib

    return Path(matplotlib.__file__).parent / "mpl-data" / "fonts" / "ttf"


@dataclass(frozen=True)
class StandinConfig:
    """Corpus size and perturbation strengths."""

    train_size: int = 60_000
    test_size: int = 10_000
    num_classes: int = 10
    rotation_deg: float = 20.0
    shear: float = 0.3
    scale_low: float = 0.62
    scale_high: float = 1.05
    translate_px: float = 2.0
    elastic_alpha: float = 5.0
    elastic_grid: int = 4
    blur_low: float = 0.4
    blur_high: float = 1.0
    thickness_p: float = 0.5
    intensity_low: float = 0.7
    noise_sigma: float = 0.04

    def __post_init__(self):
        if self.train_size % self.num_classes or self.test_size % self.num_classes:
            raise ValueError("split sizes must be divisible by num_classes")


def _render_prototypes(num_classes: int) -> np.ndarray:
    """Rasterize each (digit, font) pair once; returns (C, F, P, P) float32."""
    fdir = _font_dir()
    protos = np.zeros((num_classes, len(FONT_FILES), _PROTO_SIZE, _PROTO_SIZE),
                      dtype=np.float32)
    for fi, fname in enumerate(FONT_FILES):
        font = ImageFont.truetype(str(fdir / fname), 30)
        for digit in range(num_classes):
            ch = str(digit)
            left, top, right, bottom = font.getbbox(ch)
            w, h = right - left, bottom - top
            img = Image.new("L", (_PROTO_SIZE, _PROTO_SIZE), 0)
            ImageDraw.Draw(img).text(
                ((_PROTO_SIZE - w) / 2 - left, (_PROTO_SIZE - h) / 2 - top),
                ch, fill=255, font=font)
            protos[digit, fi] = np.asarray(img, dtype=np.float32) / 255.0
    return protos


def _warp_sample(proto: np.ndarray, rng: np.random.Generator,
                 cfg: StandinConfig) -> np.ndarray:
    theta = np.deg2rad(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))
    shear = rng.uniform(-cfg.shear, cfg.shear)
    s = rng.uniform(cfg.scale_low, cfg.scale_high) * (28.0 / _PROTO_SIZE)
    tx, ty = rng.uniform(-cfg.translate_px, cfg.translate_px, size=2)
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    fwd = rot @ np.array([[1.0, shear], [0.0, 1.0]]) * s  # input->output, (y, x) coords
    inv = np.linalg.inv(fwd)
    ci = np.array([(_PROTO_SIZE - 1) / 2.0] * 2)
    co = np.array([13.5 + ty, 13.5 + tx])
    img = ndi.affine_transform(proto, inv, offset=ci - inv @ co,
                               output_shape=(28, 28), order=1)
    # Elastic displacement: coarse Gaussian field upsampled to full resolution.
    g = cfg.elastic_grid
    zoom = 28.0 / g
    dy = ndi.zoom(rng.normal(0.0, 1.0, (g, g)), zoom, order=3) * cfg.elastic_alpha / g
    dx = ndi.zoom(rng.normal(0.0, 1.0, (g, g)), zoom, order=3) * cfg.elastic_alpha / g
    yy, xx = np.meshgrid(np.arange(28.0), np.arange(28.0), indexing="ij")
    img = ndi.map_coordinates(img, [yy + dy, xx + dx], order=1)
    r = rng.uniform()
    if r < cfg.thickness_p / 2:
        img = ndi.grey_dilation(img, size=2)
    elif r < cfg.thickness_p:
        img = ndi.grey_erosion(img, size=2)
    img = ndi.gaussian_filter(img, rng.uniform(cfg.blur_low, cfg.blur_high))
    img = img * rng.uniform(cfg.intensity_low, 1.0)
    if cfg.noise_sigma > 0:
        img = img + rng.normal(0.0, cfg.noise_sigma, img.shape)
    return np.clip(img, 0.0, 1.0)


def _generate_split(n: int, cfg: StandinConfig, protos: np.ndarray,
                    rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    per_class = n // cfg.num_classes
    labels = np.repeat(np.arange(cfg.num_classes), per_class)
    images = np.empty((n, 28, 28), dtype=np.float32)
    for i, digit in enumerate(labels):
        proto = protos[digit, rng.integers(len(FONT_FILES))]
        images[i] = _warp_sample(proto, rng, cfg)
    order = rng.permutation(n)
    # uint8 quantization so the corpus survives IDX round-trips unchanged
    quantized = np.round(images[order] * 255.0).astype(np.uint8)
    return quantized.astype(np.float32) / 255.0, labels[order]


def generate_standin_corpus(cfg: StandinConfig = StandinConfig(),
                            seed: int = 0) -> tuple[ImageDataset, ImageDataset]:
    """Generate (train, test) splits; deterministic in (cfg, seed)."""
    protos = _render_prototypes(cfg.num_classes)
    rng = np.random.default_rng(seed)
    train = _generate_split(cfg.train_size, cfg, protos, rng)
    test = _generate_split(cfg.test_size, cfg, protos, rng)
    return (make_dataset(train[0], train[1], cfg.num_classes),
            make_dataset(test[0], test[1], cfg.num_classes))


def write_standin_idx(out_dir: str | Path, cfg: StandinConfig = StandinConfig(),
                      seed: int = 0) -> dict[str, Path]:
    """Generate the corpus and write it as standard IDX train/test pairs."""
    from .idx import write_idx_images, write_idx_labels

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, test = generate_standin_corpus(cfg, seed)
    paths = {
        "train_images": out_dir / "train-images-idx3-ubyte.gz",
        "train_labels": out_dir / "train-labels-idx1-ubyte.gz",
        "test_images": out_dir / "t10k-images-idx3-ubyte.gz",
        "test_labels": out_dir / "t10k-labels-idx1-ubyte.gz",
    }
    write_idx_images(paths["train_images"], np.round(train.images * 255.0).astype(np.uint8))
    write_idx_labels(paths["train_labels"], train.labels.astype(np.uint8))
    write_idx_images(paths["test_images"], np.round(test.images * 255.0).astype(np.uint8))
    write_idx_labels(paths["test_labels"], test.labels.astype(np.uint8))
    return paths

"""Target patterns, gray-level discretization, similarity fitness and
genome evaluation for the five model variants.

Images are 256-level grayscale grids serving both as evolution targets
and as phenotypes read off converged organisms. Similarity is
1 - normalized mean squared difference, so 1 means identical and 0 the
worst possible disagreement.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .neat import FEEDFORWARD, RECURRENT, Genome
from .network import compile_genome

if TYPE_CHECKING:
    from .growth import GrowthResult

TARGET_KINDS = ("2bands", "3bands", "disc", "halfdiscs")


class GrayImage:
    """A height x width grid of integer gray levels in 0..255."""

    def __init__(self, levels):
        arr = np.asarray(levels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("levels must be a non-empty 2D array")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError("gray levels must lie in 0..255")
        self.levels = arr.astype(np.uint8)

    @property
    def width(self) -> int:
        return self.levels.shape[1]

    @property
    def height(self) -> int:
        return self.levels.shape[0]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GrayImage):
            return NotImplemented
        return np.array_equal(self.levels, other.levels)

    def __repr__(self) -> str:
        return f"GrayImage({self.width}x{self.height})"


def discretize(v: float) -> int:
    """Map a unit-interval value to a gray level, rounding half up.

    Out-of-range values are clamped to [0, 1] first.
    """
    v = min(1.0, max(0.0, v))
    return int(v * 255.0 + 0.5)


def levels_from_unit(values: np.ndarray) -> np.ndarray:
    """Vectorized discretize for an array of unit-interval values."""
    clamped = np.clip(values, 0.0, 1.0)
    return np.floor(clamped * 255.0 + 0.5).astype(np.uint8)


def similarity(a: GrayImage, b: GrayImage) -> float:
    """1 - mean of squared per-pixel differences on the 0..1 scale."""
    if a.levels.shape != b.levels.shape:
        raise ValueError(f"image dimensions differ: {a.levels.shape} vs {b.levels.shape}")
    diff = (a.levels.astype(np.float64) - b.levels.astype(np.float64)) / 255.0
    return float(1.0 - np.mean(diff * diff))


def make_target(kind: str, w: int, h: int) -> GrayImage:
    """Deterministic parametric target pictures.

    2bands: top half 0, bottom half 255. 3bands: horizontal thirds at
    levels 0/128/255 with remainder rows joining the middle band.
    disc: centered disc of level 255 (radius 0.35*min(w,h)) on black.
    halfdiscs: half-discs of radius 0.4*w at the top (level 128) and
    bottom (level 255) edge midpoints; the bottom one wins any overlap.
    """
    if w < 2 or h < 2:
        raise ValueError("targets need w, h >= 2")
    levels = np.zeros((h, w), dtype=np.int64)
    if kind == "2bands":
        levels[h // 2:, :] = 255
    elif kind == "3bands":
        third = h // 3
        levels[third:h - third, :] = 128
        levels[h - third:, :] = 255
    elif kind == "disc":
        r = np.arange(h)[:, None]
        c = np.arange(w)[None, :]
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        radius = 0.35 * min(w, h)
        levels[(r - cy) ** 2 + (c - cx) ** 2 <= radius ** 2] = 255
    elif kind == "halfdiscs":
        r = np.arange(h)[:, None]
        c = np.arange(w)[None, :]
        cx = (w - 1) / 2.0
        radius = 0.4 * w
        levels[(r - 0) ** 2 + (c - cx) ** 2 <= radius ** 2] = 128
        levels[(r - (h - 1)) ** 2 + (c - cx) ** 2 <= radius ** 2] = 255
    else:
        raise ValueError(f"unknown target kind {kind!r}")
    return GrayImage(levels)


# ---------------------------------------------------------------------------
# model variants


@dataclass(frozen=True)
class ModelVariant:
    """One of the five controller setups.

    Developmental variants exchange 1 or 2 chemicals over the grid; the
    regression variant feeds each cell its own normalized coordinates and
    skips the growth loop entirely.
    """

    name: str
    family: str  # "developmental" | "regression"
    chemicals: int
    topology: str  # feedforward | recurrent

    @property
    def n_inputs(self) -> int:
        """Real network inputs, excluding the implicit bias node."""
        if self.family == "regression":
            return 2
        return 4 * self.chemicals

    @property
    def n_outputs(self) -> int:
        if self.family == "regression":
            return 1
        return self.chemicals + 1


VARIANTS = {
    "1-ffwd": ModelVariant("1-ffwd", "developmental", 1, FEEDFORWARD),
    "1-recurr": ModelVariant("1-recurr", "developmental", 1, RECURRENT),
    "2-ffwd": ModelVariant("2-ffwd", "developmental", 2, FEEDFORWARD),
    "2-recurr": ModelVariant("2-recurr", "developmental", 2, RECURRENT),
    "regression": ModelVariant("regression", "regression", 0, FEEDFORWARD),
}


def parse_variant(name: str) -> ModelVariant:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}") from None


def check_arity(genome: Genome, variant: ModelVariant) -> None:
    n_in, n_out = len(genome.input_ids), len(genome.output_ids)
    if (n_in, n_out) != (variant.n_inputs, variant.n_outputs):
        raise ValueError(
            f"genome arity {n_in}x{n_out} does not match variant "
            f"{variant.name} ({variant.n_inputs}x{variant.n_outputs})")
    if genome.kind != variant.topology:
        raise ValueError(f"genome kind {genome.kind} does not match variant {variant.name}")


# ---------------------------------------------------------------------------
# fitness


def regression_image(genome: Genome, w: int, h: int) -> GrayImage:
    """Evaluate a coordinate-regression genome over the whole grid at once.

    Input slots are x = col/(w-1), y = row/(h-1) and the constant bias.
    """
    net = compile_genome(genome)
    cols, rows = np.meshgrid(np.arange(w), np.arange(h))
    inp = np.empty((h * w, 3))
    inp[:, 0] = cols.ravel() / (w - 1)
    inp[:, 1] = rows.ravel() / (h - 1)
    inp[:, 2] = 1.0
    act = np.zeros((h * w, net.n_neurons))
    net.forward_batch(act, inp)
    return GrayImage(levels_from_unit(act[:, net.output_ids[0]].reshape(h, w)))


def evaluate_detailed(genome: Genome, variant: ModelVariant, target: GrayImage,
                      gcfg) -> tuple[float, GrowthResult | None]:
    """Fitness plus the GrowthResult (None for the regression variant).

    Developmental genomes grow from the zero state; organisms that never
    stabilize within the iteration cap score exactly 0.
    """
    check_arity(genome, variant)
    if variant.family == "regression":
        img = regression_image(genome, target.width, target.height)
        return similarity(img, target), None
    from .growth import init_organism  # deferred: growth imports this module

    org = init_organism(genome, target.width, target.height, variant.chemicals)
    result = org.grow(gcfg)
    if not result.converged:
        return 0.0, result
    return similarity(result.phenotype, target), result


def evaluate(genome: Genome, variant: ModelVariant, target: GrayImage, gcfg) -> float:
    """Fitness in [0, 1]; 0 for organisms that fail to stabilize."""
    return evaluate_detailed(genome, variant, target, gcfg)[0]


class FitnessEvaluator:
    """Picklable evaluate() closure for worker pools."""

    def __init__(self, variant: ModelVariant, target: GrayImage, gcfg):
        self.variant = variant
        self.target = target
        self.gcfg = gcfg

    def __call__(self, genome: Genome) -> float:
        return evaluate(genome, self.variant, self.target, self.gcfg)


# ---------------------------------------------------------------------------
# portable graymap i/o


def write_pgm(img: GrayImage, path, binary: bool = False) -> None:
    """Write as P5 (binary) or P2 (text), maxval 255, row-major."""
    header = f"{'P5' if binary else 'P2'}\n{img.width} {img.height}\n255\n"
    if binary:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            fh.write(img.levels.tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(header)
            for row in img.levels:
                fh.write(" ".join(str(int(v)) for v in row) + "\n")


def read_pgm(path) -> GrayImage:
    with open(path, "rb") as fh:
        data = fh.read()
    # header tokens, skipping '#' comments
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    magic = tokens[0].decode("ascii")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    if magic == "P5":
        pos += 1  # single whitespace after maxval
        raster = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos)
        return GrayImage(raster.reshape(h, w))
    if magic == "P2":
        values = np.array(data[pos:].split(), dtype=np.int64)
        if values.size != w * h:
            raise ValueError("P2 raster size does not match header")
        return GrayImage(values.reshape(h, w))
    raise ValueError(f"not a portable graymap: magic {magic!r}")

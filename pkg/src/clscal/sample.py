"""Synthetic 24-patch chart used as the bundled sample dataset.

Reference values are commonly published 8-bit sRGB values of the 24-patch
ColorChecker.  The simulated sensor mixes channels with a fixed crosstalk
matrix, applies a per-channel illuminant gain and a slight per-channel
nonlinearity, then adds seeded Gaussian noise.  Regenerate the bundled files
with ``python -m clscal.sample``.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

PATCH_NAMES = (
    "dark skin", "light skin", "blue sky", "foliage", "blue flower", "bluish green",
    "orange", "purplish blue", "moderate red", "purple", "yellow green", "orange yellow",
    "blue", "green", "red", "yellow", "magenta", "cyan",
    "white 9.5", "neutral 8", "neutral 6.5", "neutral 5", "neutral 3.5", "black 2",
)

REFERENCE_SRGB8 = np.array([
    [115, 82, 68], [194, 150, 130], [98, 122, 157], [87, 108, 67], [133, 128, 177], [103, 189, 170],
    [214, 126, 44], [80, 91, 166], [193, 90, 99], [94, 60, 108], [157, 188, 64], [224, 163, 46],
    [56, 61, 150], [70, 148, 73], [175, 54, 60], [231, 199, 31], [187, 86, 149], [8, 133, 161],
    [243, 243, 242], [200, 200, 200], [160, 160, 160], [122, 122, 121], [85, 85, 85], [52, 52, 52],
], dtype=float)

CROSSTALK = np.array([
    [0.70, 0.22, 0.08],
    [0.15, 0.72, 0.13],
    [0.05, 0.25, 0.70],
])
ILLUMINANT_GAIN = np.array([0.52, 0.93, 0.71])
CHANNEL_EXPONENT = np.array([1.02, 1.00, 0.99])
NOISE_SIGMA = 0.01
SEED = 20240417


def synthesize(seed: int = SEED) -> tuple[tuple[str, ...], np.ndarray, np.ndarray]:
    """Return ``(names, measured, reference)`` with k x 3 arrays."""
    rng = np.random.default_rng(seed)
    reference = REFERENCE_SRGB8 / 255.0
    raw = np.power(reference @ CROSSTALK.T, CHANNEL_EXPONENT) * ILLUMINANT_GAIN
    raw = raw + NOISE_SIGMA * rng.standard_normal(raw.shape)
    measured = np.clip(raw, 0.001, None)
    return PATCH_NAMES, measured, reference


def write_sample(directory) -> None:
    from .ccm import write_patch_csv

    names, measured, reference = synthesize()
    d = Path(directory)
    write_patch_csv(d / "sample_measured.csv", names, measured)
    write_patch_csv(d / "sample_reference.csv", names, reference)


if __name__ == "__main__":
    write_sample(Path(__file__).parent / "data")

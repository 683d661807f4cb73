"""Deterministic synthetic video: a static textured background with a moving square."""

import os
from dataclasses import dataclass

import numpy as np

from .pipeline import Mask, write_gray, write_mask


@dataclass(frozen=True)
class SyntheticVideo:
    frames: list
    truth: list

    @property
    def frame_shape(self):
        return self.frames[0].shape


def moving_square(n_frames=30, height=32, width=40, side=8, noise=0.005, seed=7):
    """Frames in [0, 1] and their ground-truth masks.

    The background is a fixed smooth texture in [0.2, 0.6]. A bright square
    (value 0.95) travels along a diagonal path, bouncing off the borders.
    Small Gaussian sensor noise is added and the result is quantized to
    8 bits so the frames round-trip exactly through PGM files.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    background = 0.4 + 0.1 * np.sin(2 * np.pi * xx / width) + 0.1 * np.cos(2 * np.pi * yy / height)
    frames, truth = [], []
    y, x, dy, dx = 2, 1, 1, 2
    for _ in range(n_frames):
        img = background + noise * rng.standard_normal(background.shape)
        bits = np.zeros((height, width), dtype=bool)
        bits[y:y + side, x:x + side] = True
        img[bits] = 0.95
        img = np.rint(np.clip(img, 0.0, 1.0) * 255.0) / 255.0
        frames.append(img)
        truth.append(Mask(bits))
        if not 0 <= y + dy <= height - side:
            dy = -dy
        if not 0 <= x + dx <= width - side:
            dx = -dx
        y, x = y + dy, x + dx
    return SyntheticVideo(frames, truth)


def write_video(video, frames_dir, truth_dir=None):
    """Write frames (and optionally truth masks) as ``frame_0000.pgm`` ..."""
    os.makedirs(frames_dir, exist_ok=True)
    for i, img in enumerate(video.frames):
        write_gray(img, os.path.join(frames_dir, f"frame_{i:04d}.pgm"))
    if truth_dir is not None:
        os.makedirs(truth_dir, exist_ok=True)
        for i, mask in enumerate(video.truth):
            write_mask(mask, os.path.join(truth_dir, f"frame_{i:04d}.pgm"))

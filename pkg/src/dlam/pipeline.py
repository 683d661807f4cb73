"""Frame ingestion, foreground masks and PGM mask files."""

import fnmatch
import os
import re
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, FrameReadError, InputError

DEFAULT_THETA = 0.1
IMAGE_EXTENSIONS = (".pgm", ".png")


@dataclass(frozen=True)
class Frame:
    pixels: np.ndarray
    index: int

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(frozen=True)
class Mask:
    """Binary image, ``True`` marks foreground."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise InputError(f"mask must be a non-empty 2-D array, got shape {bits.shape}")
        object.__setattr__(self, "bits", bits)

    @property
    def height(self):
        return self.bits.shape[0]

    @property
    def width(self):
        return self.bits.shape[1]

    @property
    def shape(self):
        return self.bits.shape

    def __eq__(self, other):
        return isinstance(other, Mask) and np.array_equal(self.bits, other.bits)

    __hash__ = None


def list_images(directory, pattern="*"):
    """Image files in ``directory`` matching ``pattern``, sorted by name."""
    if not os.path.isdir(directory):
        raise FrameReadError(f"not a directory: {directory}")
    names = [n for n in os.listdir(directory)
             if fnmatch.fnmatch(n, pattern) and n.lower().endswith(IMAGE_EXTENSIONS)]
    return [os.path.join(directory, n) for n in sorted(names)]


def read_gray(path):
    """Decode an 8-bit PGM/PNG to a float image in [0, 1].

    Colour images are averaged over R, G and B with equal weights.
    """
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("L", "1"):
                arr = np.asarray(im.convert("L"), dtype=float)
            elif im.mode == "LA":
                arr = np.asarray(im.getchannel("L"), dtype=float)
            elif im.mode in ("RGB", "RGBA", "P"):
                rgb = np.asarray(im.convert("RGB"), dtype=float)
                arr = rgb.sum(axis=2) / 3.0
            else:
                raise InputError(f"{path}: unsupported image mode {im.mode}")
    except (OSError, UnidentifiedImageError) as exc:
        raise FrameReadError(f"cannot read image {path}: {exc}") from exc
    return arr / 255.0


def load_frames(directory, pattern="*"):
    """Read every image in ``directory`` (lexicographic order) as a :class:`Frame`."""
    paths = list_images(directory, pattern)
    if not paths:
        raise InputError(f"no PGM/PNG images matching {pattern!r} in {directory}")
    frames = []
    for i, path in enumerate(paths):
        pixels = read_gray(path)
        if frames and pixels.shape != frames[0].pixels.shape:
            raise InputError(f"{path} has shape {pixels.shape}, expected {frames[0].pixels.shape}")
        pixels.setflags(write=False)
        frames.append(Frame(pixels, i))
    return frames


def foreground_mask(s_column, frame_shape, theta=DEFAULT_THETA):
    """Threshold a sparse column: foreground where ``|s| >= theta``."""
    if not 0 < theta <= 1:
        raise InputError(f"theta must lie in (0, 1], got {theta}")
    s = np.asarray(s_column, dtype=float).ravel()
    h, w = frame_shape
    if s.size != h * w:
        raise InputError(f"column of length {s.size} does not fit frame shape {frame_shape}")
    return Mask((np.abs(s) >= theta).reshape(h, w))


def encode_pgm(image):
    """Binary P5 encoding of an 8-bit image array."""
    image = np.asarray(image, dtype=np.uint8)
    h, w = image.shape
    return b"P5\n%d %d\n255\n" % (w, h) + image.tobytes()


def write_mask(mask, path):
    """Write ``mask`` as a binary PGM: foreground 255, background 0."""
    with open(path, "wb") as fh:
        fh.write(encode_pgm(np.where(mask.bits, 255, 0)))


_WS = b" \t\n\r\v\f"


def _header_token(blob, pos):
    """Next whitespace-delimited header token, skipping ``#`` comments."""
    while pos < len(blob):
        c = blob[pos:pos + 1]
        if c in (b" ", b"\t", b"\n", b"\r", b"\v", b"\f"):
            pos += 1
        elif c == b"#":
            while pos < len(blob) and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        else:
            break
    start = pos
    while pos < len(blob) and blob[pos] not in _WS and blob[pos:pos + 1] != b"#":
        pos += 1
    return blob[start:pos], start, pos


def decode_pgm(blob):
    """Parse a binary P5 PGM into a uint8/uint16 array."""
    if blob[:2] != b"P5":
        raise FormatError("missing P5 magic", 0)
    pos = 2
    values = []
    for field in ("width", "height", "maxval"):
        tok, start, pos = _header_token(blob, pos)
        if not re.fullmatch(rb"[0-9]+", tok or b"-"):
            raise FormatError(f"bad PGM {field} {tok!r}", start)
        values.append(int(tok))
    w, h, maxval = values
    if w < 1 or h < 1:
        raise FormatError("PGM dimensions must be positive", 2)
    if not 1 <= maxval <= 65535:
        raise FormatError(f"PGM maxval {maxval} out of range", start)
    if pos >= len(blob) or blob[pos] not in _WS:
        raise FormatError("missing whitespace after PGM maxval", pos)
    pos += 1
    depth = 1 if maxval < 256 else 2
    need = w * h * depth
    if len(blob) - pos < need:
        raise FormatError(f"PGM raster truncated: {len(blob) - pos} of {need} bytes", len(blob))
    dtype = np.uint8 if depth == 1 else ">u2"
    data = np.frombuffer(blob, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return data, maxval


def read_mask(path):
    """Read a mask image; PGM is parsed directly, PNG via Pillow.

    Any 8-bit value of 128 or more counts as foreground.
    """
    if path.lower().endswith(".png"):
        return Mask(np.rint(read_gray(path) * 255.0) >= 128)
    with open(path, "rb") as fh:
        blob = fh.read()
    data, maxval = decode_pgm(blob)
    if maxval != 255:
        # rescale to the 8-bit range before applying the 128 cut
        return Mask(data.astype(float) * (255.0 / maxval) >= 128)
    return Mask(data >= 128)


def write_gray(image, path):
    """Write a [0, 1] float image as an 8-bit PGM (used for fixtures)."""
    arr = np.clip(np.rint(np.asarray(image, dtype=float) * 255.0), 0, 255)
    with open(path, "wb") as fh:
        fh.write(encode_pgm(arr))

"""Observation matrices, solver configuration and decomposition results.

An observation ``A`` (m pixels by n frames) is split into up to three
additive parts, ``A = L + S + E``: a low-rank background ``L``, a sparse
foreground ``S`` and a dense noise term ``E``. ``kind`` counts how many of
them a run produces (1: ``L`` only, 2: ``L + S``, 3: ``L + S + E``).
"""

import dataclasses
import math
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import FormatError, InputError

SOLVERS = ("ealm", "ialm", "spcp_asalm", "godec", "ssgodec", "drmf")
ALM_SOLVERS = ("ealm", "ialm", "spcp_asalm")
RANK_SOLVERS = ("godec", "ssgodec", "drmf")

ALM_TOL = 1e-7
STALL_TOL = 1e-6

DLM_MAGIC = b"DLAM"
DLM_VERSION = 1
_DLM_HEADER = struct.Struct("<4sIQQ")


@dataclass(frozen=True)
class ObservationMatrix:
    """Pixel-by-frame matrix; column ``j`` is frame ``j`` flattened row-major."""

    data: np.ndarray
    frame_shape: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2:
            raise InputError("observation data must be a 2-D matrix")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise InputError("observation needs at least one pixel and one frame")
        if not np.all(np.isfinite(data)):
            raise InputError("observation contains non-finite entries")
        if self.frame_shape is not None:
            h, w = (int(v) for v in self.frame_shape)
            if h < 1 or w < 1 or h * w != data.shape[0]:
                raise InputError(
                    f"frame_shape {self.frame_shape} inconsistent with {data.shape[0]} pixels")
            object.__setattr__(self, "frame_shape", (h, w))
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def m(self):
        return self.data.shape[0]

    @property
    def n(self):
        return self.data.shape[1]

    @property
    def shape(self):
        return self.data.shape

    def unstack(self):
        """Frames as a list of ``frame_shape`` images."""
        if self.frame_shape is None:
            raise InputError("observation has no frame_shape to unstack into")
        return [self.data[:, j].reshape(self.frame_shape).copy() for j in range(self.n)]


def stack_frames(frames):
    """Stack equal-shaped images into an :class:`ObservationMatrix`."""
    frames = [np.asarray(getattr(f, "pixels", f), dtype=float) for f in frames]
    if not frames:
        raise InputError("cannot stack an empty frame sequence")
    shape = frames[0].shape
    if len(shape) != 2:
        raise InputError(f"frames must be 2-D images, got shape {shape}")
    for j, f in enumerate(frames):
        if f.shape != shape:
            raise InputError(f"frame {j} has shape {f.shape}, expected {shape}")
        if not np.all(np.isfinite(f)) or f.min() < 0.0 or f.max() > 1.0:
            raise InputError(f"frame {j} has pixel values outside [0, 1]")
    data = np.stack([f.reshape(-1) for f in frames], axis=1)
    return ObservationMatrix(data, frame_shape=shape)


@dataclass
class DlamConfig:
    """Solver selection and parameters.

    Unset optional fields are filled by :func:`validate`; ``lam`` defaults to
    ``1/sqrt(max(m, n))`` and ``tol`` to 1e-7 for the ALM family or 1e-6
    (relative objective stall) for the rank-constrained solvers.
    """

    solver: str = "ialm"
    kind: int = 2
    lam: Optional[float] = None
    rank_bound: Optional[int] = None
    cardinality: Optional[int] = None
    soft_tau: Optional[float] = None
    delta: Optional[float] = None
    tol: Optional[float] = None
    max_iter: int = 500
    seed: int = 0
    brp: bool = False
    power_iters: int = 2
    # augmented Lagrangian schedule; mu0 defaults to 1.25 / ||A||_2
    mu0: Optional[float] = None
    rho: float = 1.5
    mu_cap_factor: float = 1e7
    inner_max_iter: int = 200

    def as_dict(self):
        return dataclasses.asdict(self)


@dataclass
class Validation:
    config: DlamConfig
    diagnostics: List[str]

    @property
    def ok(self):
        return not self.diagnostics


def validate(config, A):
    """Check ``config`` against the shape of ``A``.

    Never raises. Returns the config with defaults filled in together with
    the list of violated rules.
    """
    m, n = A.shape if hasattr(A, "shape") else np.shape(A)
    cfg = dataclasses.replace(config)
    diags = []
    if cfg.solver not in SOLVERS:
        diags.append(f"unknown solver {cfg.solver!r}; expected one of {', '.join(SOLVERS)}")
    if cfg.kind not in (1, 2, 3):
        diags.append(f"kind must be 1, 2 or 3, got {cfg.kind}")
    if cfg.lam is None:
        cfg.lam = 1.0 / math.sqrt(max(m, n))
    elif not cfg.lam > 0:
        diags.append("lambda must be positive")
    if cfg.tol is None:
        cfg.tol = ALM_TOL if cfg.solver in ALM_SOLVERS else STALL_TOL
    elif not cfg.tol > 0:
        diags.append("tol must be positive")
    if cfg.max_iter < 1:
        diags.append("max_iter must be positive")
    if cfg.rho <= 1:
        diags.append("rho must exceed 1")
    if cfg.power_iters < 0:
        diags.append("power_iters must be nonnegative")

    if cfg.rank_bound is not None and not 1 <= cfg.rank_bound <= min(m, n):
        diags.append(f"rank_bound must lie in [1, {min(m, n)}]")
    if cfg.cardinality is not None and not 0 <= cfg.cardinality <= m * n:
        diags.append(f"cardinality must lie in [0, {m * n}]")
    if cfg.soft_tau is not None and cfg.soft_tau < 0:
        diags.append("soft_tau must be nonnegative")
    if cfg.delta is not None and cfg.delta < 0:
        diags.append("delta must be nonnegative")

    if cfg.solver in ("godec", "ssgodec", "drmf") and cfg.rank_bound is None:
        diags.append("rank_bound required")
    if cfg.solver in ("godec", "drmf"):
        if cfg.kind == 1:
            cfg.cardinality = 0
        elif cfg.cardinality is None:
            diags.append("cardinality required")
    if cfg.solver == "ssgodec" and cfg.soft_tau is None:
        diags.append("soft_tau required")

    if cfg.kind == 3 and cfg.solver in ("ialm", "ealm"):
        diags.append("kind=3 requires delta or a solver with a noise term")
    if cfg.solver == "spcp_asalm":
        if cfg.kind != 3:
            diags.append("spcp_asalm requires kind=3")
        if cfg.delta is None:
            diags.append("delta required")
    if cfg.kind == 1 and cfg.solver not in ("godec", "drmf"):
        diags.append("kind=1 requires a rank-constrained solver (godec or drmf)")
    return Validation(cfg, diags)


@dataclass
class IterationRecord:
    objective: float
    residual: float
    rank: int
    cardinality: int
    wall_time: float


@dataclass
class SolverTrace:
    records: List[IterationRecord] = field(default_factory=list)
    termination: str = "max_iter"
    # ALM penalty in force at each iteration; empty for non-ALM solvers
    penalties: List[float] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def append(self, objective, residual, rank, cardinality, wall_time):
        self.records.append(IterationRecord(float(objective), float(residual), int(rank),
                                            int(cardinality), float(wall_time)))

    @property
    def objectives(self):
        return np.array([r.objective for r in self.records])

    @property
    def residuals(self):
        return np.array([r.residual for r in self.records])


@dataclass(frozen=True)
class DecompositionResult:
    low_rank: np.ndarray
    sparse: Optional[np.ndarray] = None
    noise: Optional[np.ndarray] = None
    trace: SolverTrace = field(default_factory=SolverTrace)

    def __post_init__(self):
        for name in ("sparse", "noise"):
            part = getattr(self, name)
            if part is not None and part.shape != self.low_rank.shape:
                raise InputError(f"{name} shape {part.shape} != low_rank shape {self.low_rank.shape}")

    def components(self):
        return [c for c in (self.low_rank, self.sparse, self.noise) if c is not None]


def residual(A, result):
    """``||A - L - S - E||_F / ||A||_F``, missing components counted as zero."""
    data = A.data if isinstance(A, ObservationMatrix) else np.asarray(A, dtype=float)
    R = data.copy()
    for part in result.components():
        if part.shape != data.shape:
            raise InputError(f"component shape {part.shape} != observation shape {data.shape}")
        R -= part
    return float(np.linalg.norm(R) / max(np.linalg.norm(data), np.finfo(float).eps))


def write_dlm(path, matrix):
    """Write a matrix in the little-endian ``.dlm`` binary format."""
    M = np.asarray(matrix, dtype="<f8")
    if M.ndim != 2:
        raise InputError("only 2-D matrices can be written as .dlm")
    m, n = M.shape
    with open(path, "wb") as fh:
        fh.write(_DLM_HEADER.pack(DLM_MAGIC, DLM_VERSION, m, n))
        fh.write(M.tobytes(order="F"))


def read_dlm(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _DLM_HEADER.size:
        raise FormatError("truncated .dlm header", len(blob))
    magic, version, m, n = _DLM_HEADER.unpack_from(blob)
    if magic != DLM_MAGIC:
        raise FormatError(f"bad .dlm magic {magic!r}", 0)
    if version != DLM_VERSION:
        raise FormatError(f"unsupported .dlm version {version}", 4)
    expected = _DLM_HEADER.size + 8 * m * n
    if len(blob) != expected:
        raise FormatError(f".dlm payload holds {len(blob) - _DLM_HEADER.size} bytes, "
                          f"expected {8 * m * n}", min(len(blob), expected))
    data = np.frombuffer(blob, dtype="<f8", offset=_DLM_HEADER.size, count=m * n)
    return data.reshape((m, n), order="F").astype(float)


def as_observation(A: Sequence) -> ObservationMatrix:
    if isinstance(A, ObservationMatrix):
        return A
    return ObservationMatrix(np.asarray(A, dtype=float))

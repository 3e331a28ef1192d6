"""Container format for cubes, raw import, and the JSON run configuration.

Cube container (extension ``.nlt``), all integers little-endian:

====== ====== ===========================================
offset size   field
====== ====== ===========================================
0      4      magic ``b"NLT3"``
4      2      format version (currently 1)
6      2      dtype code (1 = float64 little-endian)
8      12     dims I1, I2, I3 as three uint32
20     8*I1*I2*I3  payload, first index fastest
====== ====== ===========================================

Round trips are bit exact.  Payloads with NaN or infinity are rejected on
both read and write.

The run configuration is a JSON document with three sections: a required
``solver`` object mirroring :class:`~nltl2p.solver.SolverConfig`, and
optional ``noise`` (:class:`~nltl2p.noise.NoiseSpec`) and ``paths``
objects.  Unknown keys anywhere are rejected by name.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import UsageError
from .noise import NoiseSpec
from .solver import SolverConfig
from .tensor import check_finite

MAGIC = b"NLT3"
FORMAT_VERSION = 1
DTYPE_FLOAT64 = 1
_HEADER = struct.Struct("<4sHHIII")


def write_hsi(path, t: np.ndarray) -> None:
    """Write a 3rd-order tensor to the cube container."""
    if t.ndim != 3:
        raise UsageError(f"expected a 3rd-order tensor, got ndim={t.ndim}")
    check_finite(t, "cube payload")
    arr = np.asarray(t, dtype="<f8")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_FLOAT64, *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.ravel(order="F").tobytes())


def read_hsi(path) -> np.ndarray:
    """Read a cube container back into a float64 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise UsageError(f"{path}: truncated header")
    magic, version, dtype, i1, i2, i3 = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise UsageError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise UsageError(f"{path}: unsupported format version {version}")
    if dtype != DTYPE_FLOAT64:
        raise UsageError(f"{path}: unsupported dtype code {dtype}")
    expected = _HEADER.size + 8 * i1 * i2 * i3
    if len(raw) != expected:
        raise UsageError(f"{path}: payload is {len(raw) - _HEADER.size} bytes, "
                         f"expected {expected - _HEADER.size}")
    flat = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    t = flat.reshape((i1, i2, i3), order="F").astype(np.float64)
    check_finite(t, f"{path} payload")
    return t


_RAW_DTYPES = {"float64": "<f8", "float32": "<f4"}


def import_raw(path, dims: tuple[int, int, int], dtype: str = "float64",
               normalize: bool = False) -> np.ndarray:
    """Load a headerless binary cube (first index fastest, little-endian).

    With ``normalize=True`` the cube is min-max scaled to [0, 1].
    """
    if dtype not in _RAW_DTYPES:
        raise UsageError(f"unsupported raw dtype {dtype!r}; "
                         f"choose from {sorted(_RAW_DTYPES)}")
    dims = tuple(int(v) for v in dims)
    if len(dims) != 3 or any(v < 1 for v in dims):
        raise UsageError(f"dims must be three positive integers, got {dims}")
    np_dtype = np.dtype(_RAW_DTYPES[dtype])
    with open(path, "rb") as fh:
        raw = fh.read()
    expected = np_dtype.itemsize * dims[0] * dims[1] * dims[2]
    if len(raw) != expected:
        raise UsageError(f"{path}: file is {len(raw)} bytes, dims {dims} with "
                         f"{dtype} require {expected}")
    t = np.frombuffer(raw, dtype=np_dtype).astype(np.float64)
    t = t.reshape(dims, order="F")
    check_finite(t, f"{path} payload")
    if normalize:
        t = normalize_cube(t)
    return t


def normalize_cube(t: np.ndarray) -> np.ndarray:
    """Per-cube min-max normalization onto [0, 1]."""
    lo, hi = float(np.min(t)), float(np.max(t))
    if hi == lo:
        raise UsageError("cannot normalize a constant cube")
    return (t - lo) / (hi - lo)


def sha256_of(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunConfig:
    solver: SolverConfig
    noise: NoiseSpec | None = None
    paths: dict = field(default_factory=dict)


_SOLVER_KEYS = {
    "delta": float, "gamma": float, "p": float, "w": None,
    "alpha_s": float, "alpha_x": float, "alpha_g": float,
    "ranks": None, "block": int, "stride": None, "window": int, "m2": int,
    "candidate_stride": int, "max_outer_iters": int, "inner_xg_iters": int,
    "bm_refresh_iters": int, "rel_tol": float, "workers": int,
}

_NOISE_KEYS = {
    "gaussian_sigma": float, "stripe_bands": None, "stripe_density": float,
    "stripe_sigma": float, "deadline_bands": float, "deadline_density": float,
    "seed": int,
}

_PATH_KEYS = ("input", "output", "stripes_out", "diagnostics", "report")


def _build_section(doc: dict, section: str, allowed: dict) -> dict:
    sub = doc[section]
    if not isinstance(sub, dict):
        raise UsageError(f"config section {section!r} must be an object")
    kwargs = {}
    for key, value in sub.items():
        if key not in allowed:
            raise UsageError(f"unknown config key {section}.{key}")
        conv = allowed[key]
        kwargs[key] = conv(value) if conv is not None and value is not None else value
    return kwargs


def parse_run_config(text: str) -> RunConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise UsageError(f"malformed config JSON: {err}") from err
    if not isinstance(doc, dict):
        raise UsageError("config root must be a JSON object")
    for key in doc:
        if key not in ("solver", "noise", "paths"):
            raise UsageError(f"unknown config key {key}")
    if "solver" not in doc:
        raise UsageError("missing config key solver")

    solver_kwargs = _build_section(doc, "solver", _SOLVER_KEYS)
    if "ranks" in solver_kwargs and solver_kwargs["ranks"] is not None:
        solver_kwargs["ranks"] = tuple(int(v) for v in solver_kwargs["ranks"])
    if "stride" in solver_kwargs and solver_kwargs["stride"] is not None:
        solver_kwargs["stride"] = int(solver_kwargs["stride"])
    try:
        solver_config = SolverConfig(**solver_kwargs)
        solver_config.validate()
    except TypeError as err:
        raise UsageError(f"bad solver config: {err}") from err

    noise_spec = None
    if "noise" in doc:
        noise_spec = NoiseSpec(**_build_section(doc, "noise", _NOISE_KEYS))
        noise_spec.validate()

    paths = {}
    if "paths" in doc:
        sub = doc["paths"]
        if not isinstance(sub, dict):
            raise UsageError("config section 'paths' must be an object")
        for key, value in sub.items():
            if key not in _PATH_KEYS:
                raise UsageError(f"unknown config key paths.{key}")
            paths[key] = str(value)

    return RunConfig(solver=solver_config, noise=noise_spec, paths=paths)


def load_run_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise UsageError(f"cannot read config {path}: {err}") from err
    return parse_run_config(text)

"""JSON file formats for tensors and channels.

Complex numbers are stored as ``[re, im]`` pairs.

MPS file::

    {"d": 4, "D": 2, "matrices": [[[[re, im], ...], ...], ...]}   # d x D x D

Channel file::

    {"dim": 2, "matrix": [[[re, im], ...], ...]}                     # D^2 x D^2

The channel matrix uses the row-major vectorization ``vec(X)[a*D + b] = X[a, b]``,
in which ``Gamma = sum_i A_i (x) conj(A_i)``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import models
from .channel import QuantumChannel
from .errors import ShapeMismatchError, ValidationError
from .mps import MpsTensor, load_mps


def encode_complex(a) -> list:
    a = np.asarray(a, dtype=complex)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def decode_complex(x) -> np.ndarray:
    a = np.asarray(x, dtype=float)
    if a.ndim == 0 or a.shape[-1] != 2:
        raise ShapeMismatchError("complex entries must be [re, im] pairs")
    return a[..., 0] + 1j * a[..., 1]


def mps_to_dict(mps: MpsTensor) -> dict:
    return {"d": mps.d, "D": mps.D, "matrices": encode_complex(mps.matrices)}


def mps_from_dict(doc: dict) -> MpsTensor:
    try:
        d, D, raw = int(doc["d"]), int(doc["D"]), doc["matrices"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"MPS document is missing field {exc}") from exc
    try:
        A = decode_complex(raw)
    except ValueError as exc:
        raise ShapeMismatchError("matrices of mixed shapes") from exc
    return load_mps(A, d, D)


def channel_to_dict(ch: QuantumChannel) -> dict:
    return {"dim": ch.dim, "matrix": encode_complex(ch.matrix)}


def channel_from_dict(doc: dict) -> QuantumChannel:
    try:
        D = int(doc["dim"])
        M = decode_complex(doc["matrix"])
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"channel document is missing field {exc}") from exc
    except ValueError as exc:
        raise ShapeMismatchError("ragged channel matrix") from exc
    return QuantumChannel(D, M, "direct")


def save_mps(mps: MpsTensor, path) -> None:
    Path(path).write_text(json.dumps(mps_to_dict(mps)))


def save_channel(ch: QuantumChannel, path) -> None:
    Path(path).write_text(json.dumps(channel_to_dict(ch)))


def _builtin(spec: str) -> MpsTensor | None:
    name, _, arg = spec.partition(":")
    if name == "pauli":
        p = [float(x) for x in arg.split(",")] if arg else models.PAULI_P
        return models.pauli_tensor(p)
    if name == "aklt":
        return models.aklt_family(float(arg) if arg else 2 / 3)
    if name == "ghz":
        return models.ghz_tensor()
    return None


def read_mps(spec: str) -> MpsTensor:
    """Load an MPS file, or a built-in tensor named ``pauli[:p0,p1,p2,p3]``,
    ``aklt[:lambda]`` or ``ghz``."""
    p = Path(spec)
    if p.exists():
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{spec}: not valid JSON ({exc})") from exc
        return mps_from_dict(doc)
    m = _builtin(spec)
    if m is None:
        raise ValidationError(f"no MPS file or built-in tensor named {spec!r}")
    return m


def read_channel(path: str) -> QuantumChannel:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ValidationError(f"channel file {path!r} not found") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return channel_from_dict(doc)

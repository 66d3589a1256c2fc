"""On-disk formats: GSRM binary matrices, raw vectors, instance directories.

The GSRM matrix format is a little-endian header ``magic "GSRM", u32 n,
u32 p, u8 dtype`` (dtype 0 = float64) followed by the row-major payload.
Vectors are raw little-endian float64.  Instances serialize to a
directory holding the design, response, optional ground truth, the
group structure JSON and a metadata JSON.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .data import Instance
from .groups import GroupStructure

_MAGIC = b"GSRM"
_DTYPE_F64 = 0


def write_matrix(path, A) -> None:
    A = np.ascontiguousarray(A, dtype="<f8")
    n, p = A.shape
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIB", n, p, _DTYPE_F64))
        fh.write(A.tobytes())


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        n, p, dtype = struct.unpack("<IIB", fh.read(9))
        if dtype != _DTYPE_F64:
            raise ValueError(f"{path}: unsupported dtype code {dtype}")
        payload = fh.read(8 * n * p)
        if len(payload) != 8 * n * p:
            raise ValueError(f"{path}: truncated payload")
    return np.frombuffer(payload, dtype="<f8").reshape(n, p).copy()


def read_matrix_csv(path) -> np.ndarray:
    """Small-instance fallback reader."""
    return np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))


def write_vector(path, v) -> None:
    np.asarray(v, dtype="<f8").tofile(path)


def read_vector(path) -> np.ndarray:
    return np.fromfile(path, dtype="<f8")


def save_instance(directory, inst: Instance) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "A.gsrm", inst.A)
    write_vector(d / "b.f64", inst.b)
    (d / "groups.json").write_text(inst.g.to_json())
    meta = dict(inst.meta)
    meta["seed"] = inst.seed
    if inst.support_true is not None:
        meta["support_true"] = (np.asarray(inst.support_true) + 1).tolist()  # 1-based
    (d / "meta.json").write_text(json.dumps(meta, indent=2))
    if inst.x_true is not None:
        write_vector(d / "x_true.f64", inst.x_true)
    return d


def load_instance(directory) -> Instance:
    d = Path(directory)
    A = read_matrix(d / "A.gsrm")
    b = read_vector(d / "b.f64")
    g = GroupStructure.from_json((d / "groups.json").read_text())
    meta = json.loads((d / "meta.json").read_text())
    seed = meta.pop("seed", None)
    support = meta.pop("support_true", None)
    x_true = read_vector(d / "x_true.f64") if (d / "x_true.f64").exists() else None
    return Instance(
        A=A,
        b=b,
        g=g,
        x_true=x_true,
        support_true=None if support is None else np.asarray(support, dtype=np.intp) - 1,
        seed=seed,
        meta=meta,
    )


def load_multitask_csv(path) -> Instance:
    """Assemble a multi-task instance from rows of (task id, features..., response)."""
    from .data import assemble_multitask

    raw = np.atleast_2d(np.loadtxt(path, delimiter=",", dtype=float))
    if raw.shape[1] < 3:
        raise ValueError("multitask CSV needs task id, at least one feature, and a response")
    tasks = []
    for tid in np.unique(raw[:, 0]):
        rows = raw[raw[:, 0] == tid]
        tasks.append((rows[:, 1:-1], rows[:, -1]))
    return assemble_multitask(tasks)


def write_traces_jsonl(path, traces, include_x: bool = True) -> None:
    with open(path, "w") as fh:
        for tr in traces:
            fh.write(json.dumps(tr.to_dict(include_x=include_x)) + "\n")

"""Kernel file format "okt-v1".

A kernel is stored as a single JSON document:

    {"format": "okt-v1",
     "shape": [c_out, c_in_per_group, k_h, k_w],
     "groups": g,
     "dtype": "f64",
     "order": "row-major",
     "data": [ ... flat numbers ... ]}

Serialization is canonical (sorted keys, repr floats), so writing the same
kernel twice produces byte-identical files.  Readers reject any unknown
"format" value.
"""

from __future__ import annotations

import json

import numpy as np

from .tensor_core import KernelTensor

FORMAT_NAME = "okt-v1"
_DTYPES = {"f64": np.float64, "f32": np.float32}


def kernel_to_json(K: KernelTensor, dtype: str = "f64") -> str:
    if dtype not in _DTYPES:
        raise ValueError(f"unsupported dtype {dtype!r}, expected one of {sorted(_DTYPES)}")
    flat = K.data.astype(_DTYPES[dtype]).ravel(order="C")
    doc = {
        "format": FORMAT_NAME,
        "shape": [int(n) for n in K.data.shape],
        "groups": int(K.groups),
        "dtype": dtype,
        "order": "row-major",
        "data": [float(v) for v in flat],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def kernel_from_json(text: str) -> KernelTensor:
    doc = json.loads(text)
    if not isinstance(doc, dict) or doc.get("format") != FORMAT_NAME:
        raise ValueError(
            f"unknown kernel file format {doc.get('format') if isinstance(doc, dict) else None!r}"
        )
    if doc.get("dtype") not in _DTYPES:
        raise ValueError(f"unknown dtype {doc.get('dtype')!r}")
    if doc.get("order") != "row-major":
        raise ValueError(f"unknown element order {doc.get('order')!r}")
    shape = tuple(int(n) for n in doc["shape"])
    if len(shape) != 4:
        raise ValueError(f"kernel shape must have 4 axes, got {shape}")
    data = np.asarray(doc["data"], dtype=np.float64)
    if data.size != int(np.prod(shape)):
        raise ValueError("data length does not match shape")
    return KernelTensor(data.reshape(shape), groups=int(doc.get("groups", 1)))


def write_kernel(path, K: KernelTensor, dtype: str = "f64") -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write(kernel_to_json(K, dtype=dtype))
        f.write("\n")


def read_kernel(path) -> KernelTensor:
    with open(path, "r", encoding="ascii") as f:
        return kernel_from_json(f.read())

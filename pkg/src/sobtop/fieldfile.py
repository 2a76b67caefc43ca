"""SFLD v1 field files.

Header line:   SFLD v1 m=<m> nu=<nu> dims=<d1,...,dm> box=<lo1:hi1,...>
Payload line:  "ascii" or "bin64"
Data:          nu components per node, nodes row-major (last axis fastest);
               ascii floats at 17 significant digits or little-endian f64.
Binary round trips are bit exact.
"""

import numpy as np

from .errors import ValidationError
from .fields import GridField
from .geometry import Box


def write_field(path, field, binary=True):
    dims = ",".join(str(d) for d in field.dims)
    box = ",".join(f"{lo!r}:{hi!r}" for lo, hi in zip(field.box.lo, field.box.hi))
    header = f"SFLD v1 m={field.m} nu={field.nu} dims={dims} box={box}\n"
    flat = np.ascontiguousarray(field.values.reshape(-1), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header.encode())
        if binary:
            fh.write(b"bin64\n")
            fh.write(flat.tobytes())
        else:
            fh.write(b"ascii\n")
            fh.write("\n".join(f"{x:.17g}" for x in flat).encode())
            fh.write(b"\n")


def read_field(path, target=None):
    with open(path, "rb") as fh:
        header = fh.readline().decode().strip()
        mode = fh.readline().decode().strip()
        payload = fh.read()
    parts = header.split()
    if len(parts) < 6 or parts[0] != "SFLD" or parts[1] != "v1":
        raise ValidationError(f"not an SFLD v1 file: {header!r}")
    kv = dict(p.split("=", 1) for p in parts[2:])
    m = int(kv["m"])
    nu = int(kv["nu"])
    dims = tuple(int(d) for d in kv["dims"].split(","))
    lo, hi = [], []
    for rng in kv["box"].split(","):
        a, b = rng.split(":")
        lo.append(float(a))
        hi.append(float(b))
    box = Box(m, tuple(lo), tuple(hi))
    count = nu * int(np.prod(dims))
    if mode == "bin64":
        flat = np.frombuffer(payload, dtype="<f8", count=count)
    elif mode == "ascii":
        flat = np.array([float(tok) for tok in payload.split()], dtype=float)
    else:
        raise ValidationError(f"unknown payload mode {mode!r}")
    if flat.size != count:
        raise ValidationError(f"expected {count} values, found {flat.size}")
    values = flat.reshape(dims + (nu,)).copy()
    return GridField(box, dims, values, target=target)

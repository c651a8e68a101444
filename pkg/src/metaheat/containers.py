"""Binary container files: a text header plus named raw arrays.

Layout: ASCII header lines "key value", then "arrays N", then per array a
line "name dtype ndim d0 d1 ..." followed immediately by the raw
little-endian payload.  Round-trips are bit-exact, which checkpoint
resume and score-table reuse rely on.
"""

import numpy as np

from .errors import ParseError

MAGIC = "metaheat-container-v1"


def write_container(path, meta, arrays):
    with open(path, "wb") as fh:
        fh.write((MAGIC + "\n").encode())
        for k in meta:
            v = str(meta[k])
            if "\n" in k or "\n" in v or " " in k:
                raise ValueError(f"bad meta entry {k!r}")
            fh.write(f"{k} {v}\n".encode())
        fh.write(f"arrays {len(arrays)}\n".encode())
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr)
            dt = arr.dtype.newbyteorder("<")
            arr = arr.astype(dt, copy=False)
            dims = " ".join(str(d) for d in arr.shape)
            fh.write(f"{name} {dt.str} {arr.ndim} {dims}".rstrip().encode() + b"\n")
            fh.write(arr.tobytes())


def read_container(path):
    meta = {}
    arrays = {}
    with open(path, "rb") as fh:
        line = fh.readline().decode().rstrip("\n")
        if line != MAGIC:
            raise ParseError(f"not a {MAGIC} file: {path}")
        while True:
            line = fh.readline()
            if not line:
                raise ParseError("truncated container header")
            text = line.decode().rstrip("\n")
            if text.startswith("arrays "):
                count = int(text.split()[1])
                break
            k, _, v = text.partition(" ")
            meta[k] = v
        for _ in range(count):
            head = fh.readline().decode().rstrip("\n").split()
            name, dtstr, ndim = head[0], head[1], int(head[2])
            shape = tuple(int(x) for x in head[3 : 3 + ndim])
            dt = np.dtype(dtstr)
            nbytes = dt.itemsize * int(np.prod(shape)) if shape else dt.itemsize
            buf = fh.read(nbytes)
            if len(buf) != nbytes:
                raise ParseError(f"truncated payload for array {name!r}")
            arrays[name] = np.frombuffer(buf, dtype=dt).reshape(shape).copy()
    return meta, arrays

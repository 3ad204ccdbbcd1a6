"""Matrix exchange formats: row-major CSV text and the RBLM binary dump.

Binary layout: magic bytes ``RBLM``, u32 rows, u32 cols, u32 flag
(0 = real, 1 = complex), then column-major little-endian float64 entries
(complex entries interleaved re, im).
"""

import struct

import numpy as np

MAGIC = b"RBLM"


def save_matrix_binary(path, mat):
    mat = np.asarray(mat)
    if mat.ndim != 2:
        raise ValueError("expected a 2-d array")
    is_complex = np.iscomplexobj(mat)
    rows, cols = mat.shape
    header = MAGIC + struct.pack("<III", rows, cols, 1 if is_complex else 0)
    dtype = np.complex128 if is_complex else np.float64
    body = np.asarray(mat, dtype=dtype).tobytes(order="F")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body)


def load_matrix_binary(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != MAGIC:
        raise ValueError(f"bad magic bytes {raw[:4]!r}, expected {MAGIC!r}")
    rows, cols, flag = struct.unpack("<III", raw[4:16])
    dtype = np.complex128 if flag else np.float64
    body = np.frombuffer(raw[16:], dtype="<c16" if flag else "<f8")
    if body.size != rows * cols:
        raise ValueError("truncated RBLM payload")
    return np.asarray(body, dtype=dtype).reshape((rows, cols), order="F")


def save_matrix_csv(path, mat):
    mat = np.asarray(mat)
    conv = complex if np.iscomplexobj(mat) else float
    with open(path, "w") as fh:
        for row in mat:
            fh.write(",".join(repr(conv(v)) for v in row))
            fh.write("\n")


def load_matrix_csv(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            vals = [complex(tok) for tok in line.split(",")]
            rows.append(vals)
    arr = np.array(rows)
    if np.allclose(arr.imag, 0.0):
        return np.ascontiguousarray(arr.real)
    return arr

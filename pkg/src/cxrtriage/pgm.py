"""Binary PGM (P5) reader/writer for 8-bit and 16-bit grayscale rasters.

PGM is the fixture format: every place the pipeline accepts an image, a P5
file works, so tests never need real radiographs. 16-bit sample values are
big-endian per the Netpbm convention.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np

from .dicom import ImageGrid


def decode_pgm(data: bytes, photometric: str = "MONOCHROME2") -> ImageGrid:
    if not data.startswith(b"P5"):
        raise ValueError("not a binary PGM (P5) file")
    # Header tokens may be separated by any whitespace and '#' comments.
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace byte after maxval
    cols, rows, maxval = tokens
    if maxval <= 0 or maxval > 65535:
        raise ValueError(f"unsupported PGM maxval {maxval}")
    bits = 8 if maxval < 256 else 16
    count = rows * cols
    raster = data[pos : pos + count * (bits // 8)]
    if len(raster) != count * (bits // 8):
        raise ValueError("PGM raster shorter than header declares")
    dtype = np.uint8 if bits == 8 else np.dtype(">u2")
    samples = np.frombuffer(raster, dtype=dtype).astype(
        np.uint8 if bits == 8 else np.uint16
    )
    return ImageGrid(rows, cols, bits, photometric, samples)


def encode_pgm(grid: ImageGrid) -> bytes:
    header = f"P5\n{grid.cols} {grid.rows}\n{grid.maxval}\n".encode("ascii")
    if grid.bits_allocated == 8:
        raster = np.ascontiguousarray(grid.samples, dtype=np.uint8).tobytes()
    else:
        raster = np.ascontiguousarray(grid.samples, dtype=">u2").tobytes()
    return header + raster


def read_pgm(path: Union[str, Path], photometric: str = "MONOCHROME2") -> ImageGrid:
    return decode_pgm(Path(path).read_bytes(), photometric)


def write_pgm(grid: ImageGrid, path: Union[str, Path]) -> None:
    Path(path).write_bytes(encode_pgm(grid))

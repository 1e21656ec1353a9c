"""Binary file formats for photon cubes and images.

Cube format "SPC1" (all little endian):
    magic   4 bytes  b"SPC1"
    Nr      u32
    Nc      u32
    T       u32
    bin_width_ps      f64
    refractive_index  f64
    counts  Nr*Nc*T u32, (row, col, bin) C order

Image format "SPI1":
    magic   4 bytes  b"SPI1"
    Nr      u32
    Nc      u32
    values  Nr*Nc f64, row major

Both formats round-trip bit exactly (NaN payloads included).
"""

import numpy as np

from .errors import FormatError
from .model import PhotonCube

CUBE_MAGIC = b"SPC1"
IMAGE_MAGIC = b"SPI1"

_MAX_HEADER_DIM = 1 << 20  # sanity bound on header dimensions


class _Reader:
    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise FormatError(
                f"{self.path}: truncated while reading {what} at byte {self.offset}"
            )
        out = self.data[self.offset:self.offset + n]
        self.offset += n
        return out

    def u32(self, what: str) -> int:
        return int(np.frombuffer(self.take(4, what), dtype="<u4")[0])

    def f64(self, what: str) -> float:
        return float(np.frombuffer(self.take(8, what), dtype="<f8")[0])

    def expect_magic(self, magic: bytes):
        got = self.take(len(magic), "magic")
        if got != magic:
            raise FormatError(
                f"{self.path}: bad magic {got!r} at byte 0 (expected {magic!r})"
            )

    def expect_end(self):
        if self.offset != len(self.data):
            raise FormatError(
                f"{self.path}: {len(self.data) - self.offset} trailing bytes "
                f"at byte {self.offset}"
            )


def _check_dim(value: int, what: str, path: str, offset: int) -> int:
    if not 1 <= value <= _MAX_HEADER_DIM:
        raise FormatError(f"{path}: invalid {what} {value} at byte {offset}")
    return value


def write_cube(path, cube: PhotonCube) -> None:
    with open(path, "wb") as fh:
        fh.write(CUBE_MAGIC)
        fh.write(np.asarray([cube.n_rows, cube.n_cols, cube.n_bins],
                            dtype="<u4").tobytes())
        fh.write(np.asarray([cube.bin_width_ps, cube.refractive_index],
                            dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(cube.counts, dtype="<u4").tobytes())


def read_cube(path) -> PhotonCube:
    with open(path, "rb") as fh:
        rd = _Reader(fh.read(), str(path))
    rd.expect_magic(CUBE_MAGIC)
    off = rd.offset
    n_rows = _check_dim(rd.u32("rows"), "row count", rd.path, off)
    off = rd.offset
    n_cols = _check_dim(rd.u32("cols"), "column count", rd.path, off)
    off = rd.offset
    n_bins = _check_dim(rd.u32("bins"), "bin count", rd.path, off)
    bin_width_ps = rd.f64("bin width")
    refractive_index = rd.f64("refractive index")
    raw = rd.take(4 * n_rows * n_cols * n_bins, "counts")
    rd.expect_end()
    counts = np.frombuffer(raw, dtype="<u4").reshape(n_rows, n_cols, n_bins)
    return PhotonCube(counts.copy(), bin_width_ps, refractive_index)


def write_image(path, image: np.ndarray) -> None:
    img = np.asarray(image, dtype="<f8")
    if img.ndim != 2 or min(img.shape) < 1:
        raise ValueError("image must be a nonempty 2-D array")
    with open(path, "wb") as fh:
        fh.write(IMAGE_MAGIC)
        fh.write(np.asarray(img.shape, dtype="<u4").tobytes())
        fh.write(np.ascontiguousarray(img).tobytes())


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        rd = _Reader(fh.read(), str(path))
    rd.expect_magic(IMAGE_MAGIC)
    off = rd.offset
    n_rows = _check_dim(rd.u32("rows"), "row count", rd.path, off)
    off = rd.offset
    n_cols = _check_dim(rd.u32("cols"), "column count", rd.path, off)
    raw = rd.take(8 * n_rows * n_cols, "values")
    rd.expect_end()
    return np.frombuffer(raw, dtype="<f8").reshape(n_rows, n_cols).copy()

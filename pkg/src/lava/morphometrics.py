"""Vessel density and box-counting fractal dimension of binary vessel maps."""

from __future__ import annotations

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyMask, ImageTooSmall, MalformedFile, UnsupportedFormat

MASK_MAGIC = b"LMSK"
MASK_SUFFIXES = {".pgm": "pgm", ".lmsk": "lavamask", ".lavamask": "lavamask"}


@dataclass(frozen=True, eq=False)
class VesselMap:
    pixels: np.ndarray  # bool, shape (height, width)

    def __post_init__(self):
        px = np.asarray(self.pixels).astype(bool)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise MalformedFile(f"vessel map must be a non-empty 2-D raster, got shape {px.shape}")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    def __eq__(self, other):
        if not isinstance(other, VesselMap):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool((self.pixels == other.pixels).all())

    __hash__ = None

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class BoxCountSeries:
    sizes: tuple[int, ...]
    counts: tuple[int, ...]
    fitted_dimension: float
    r2: float

    @property
    def entries(self) -> list[tuple[int, int]]:
        return list(zip(self.sizes, self.counts))


# -- file formats ---------------------------------------------------------

def _pgm_tokens(data: bytes, count: int, pos: int):
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedFile("truncated PGM header")
        out.append(data[start:pos])
    return out, pos


def loads_pgm(data: bytes) -> VesselMap:
    """Parse binary (P5) or ASCII (P2) PGM; grey levels > 127 count as vessel."""
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise UnsupportedFormat(f"not a P5/P2 PGM (magic {magic!r})")
    try:
        (w, h, maxval), pos = _pgm_tokens(data, 3, 2)
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError as e:
        raise MalformedFile(f"bad PGM header: {e}") from None
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise MalformedFile(f"bad PGM dimensions {w}x{h} maxval {maxval}")
    if magic == b"P5":
        pos += 1  # single whitespace after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos : pos + w * h * dtype.itemsize]
        if len(raw) != w * h * dtype.itemsize:
            raise MalformedFile("PGM pixel data truncated")
        grey = np.frombuffer(raw, dtype=dtype)
    else:
        try:
            grey = np.array(data[pos:].split(), dtype=np.int64)
        except ValueError:
            raise MalformedFile("non-integer PGM sample") from None
        if len(grey) != w * h:
            raise MalformedFile(f"expected {w * h} PGM samples, got {len(grey)}")
    return VesselMap(grey.reshape(h, w) > 127)


def dumps_pgm(vmap: VesselMap) -> bytes:
    header = f"P5\n{vmap.width} {vmap.height}\n255\n".encode()
    return header + (vmap.pixels.astype(np.uint8) * 255).tobytes()


def loads_lavamask(data: bytes) -> VesselMap:
    """magic "LMSK", u32 width, u32 height (little endian), row-major bits packed MSB first."""
    if data[:4] != MASK_MAGIC:
        raise UnsupportedFormat(f"not a lavamask file (magic {data[:4]!r})")
    if len(data) < 12:
        raise MalformedFile("truncated lavamask header")
    w, h = struct.unpack("<II", data[4:12])
    nbits = w * h
    body = data[12:]
    if w < 1 or h < 1 or len(body) != (nbits + 7) // 8:
        raise MalformedFile(f"lavamask {w}x{h} needs {(nbits + 7) // 8} bytes, got {len(body)}")
    bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8), count=nbits)
    return VesselMap(bits.reshape(h, w).astype(bool))


def dumps_lavamask(vmap: VesselMap) -> bytes:
    return MASK_MAGIC + struct.pack("<II", vmap.width, vmap.height) + np.packbits(vmap.pixels.ravel()).tobytes()


def _format_of(path: Path, data: bytes, format: str | None) -> str:
    if format is not None:
        return format
    if data[:4] == MASK_MAGIC:
        return "lavamask"
    if data[:2] in (b"P5", b"P2"):
        return "pgm"
    raise UnsupportedFormat(f"cannot infer mask format of {path}")


def load_vessel_map(path, format: str | None = None) -> VesselMap:
    path = Path(path)
    data = path.read_bytes()
    fmt = _format_of(path, data, format)
    if fmt == "pgm":
        return loads_pgm(data)
    if fmt == "lavamask":
        return loads_lavamask(data)
    raise UnsupportedFormat(f"unknown mask format {fmt!r}")


def save_vessel_map(vmap: VesselMap, path, format: str = "lavamask") -> None:
    if format == "pgm":
        Path(path).write_bytes(dumps_pgm(vmap))
    elif format == "lavamask":
        Path(path).write_bytes(dumps_lavamask(vmap))
    else:
        raise UnsupportedFormat(f"unknown mask format {format!r}")


# -- measures -------------------------------------------------------------

def vessel_density(vmap: VesselMap) -> float:
    return int(vmap.pixels.sum()) / (vmap.width * vmap.height)


def box_count(vmap: VesselMap, box: int) -> int:
    """Occupied box x box cells of a grid anchored at (0, 0), ragged edge cells included."""
    if box < 1:
        raise ValueError(f"box must be >= 1, got {box}")
    px = vmap.pixels
    h, w = px.shape
    hh, ww = -(-h // box) * box, -(-w // box) * box
    padded = np.zeros((hh, ww), dtype=bool)
    padded[:h, :w] = px
    cells = padded.reshape(hh // box, box, ww // box, box).any(axis=(1, 3))
    return int(cells.sum())


def box_sizes(width: int, height: int, min_box: int = 16) -> list[int]:
    s = 1 << (max(width, height).bit_length() - 1)
    out = []
    while s >= min_box:
        out.append(s)
        s //= 2
    return out


def fractal_dimension(vmap: VesselMap, min_box: int = 16) -> BoxCountSeries:
    """OLS slope of log N(s) on log(1/s) over s = s0, s0/2, ..., min_box."""
    if min_box < 1:
        raise ValueError(f"min_box must be >= 1, got {min_box}")
    if max(vmap.width, vmap.height) < 2 * min_box:
        raise ImageTooSmall(f"{vmap.width}x{vmap.height} is too small for min_box {min_box}")
    if not vmap.pixels.any():
        raise EmptyMask("vessel map has no vessel pixels")
    sizes = box_sizes(vmap.width, vmap.height, min_box)
    counts = [box_count(vmap, s) for s in sizes]
    x = np.log(1.0 / np.array(sizes, dtype=np.float64))
    y = np.log(np.array(counts, dtype=np.float64))
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return BoxCountSeries(tuple(sizes), tuple(counts), float(slope), float(min(max(r2, 0.0), 1.0)))


def sierpinski_raster(depth: int = 8, size: int = 1024) -> VesselMap:
    """Pascal-triangle-mod-2 raster with 2**depth levels, each cell size/2**depth pixels wide."""
    cell = size >> depth
    if cell < 1 or cell << depth != size:
        raise ValueError("size must be a multiple of 2**depth")
    i, j = np.indices((size, size)) // cell
    return VesselMap((i & j) == 0)


def measure_one(path, min_box: int = 16) -> dict:
    """Density and dimension of one mask file; sample_id is the file stem."""
    p = Path(path)
    vmap = load_vessel_map(p, MASK_SUFFIXES.get(p.suffix.lower()))
    series = fractal_dimension(vmap, min_box)
    return {
        "sample_id": p.stem,
        "vessel_density": vessel_density(vmap),
        "fractal_dimension": series.fitted_dimension,
        "r2": series.r2,
    }


def measure_directory(directory, min_box: int = 16, workers: int = 1) -> list[dict]:
    """``measure_one`` for every mask file in ``directory``, sorted by name."""
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in MASK_SUFFIXES)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda p: measure_one(p, min_box), files))
    return [measure_one(p, min_box) for p in files]

"""Binary PGM (P5) reader and writer.

Images are exchanged as float arrays in [0, 1]; writing quantizes with
round-half-up at the chosen maxval (255 or 65535), reading divides back, so
a write -> read round trip is lossless at the stored bit depth.  16-bit
samples are big-endian, per the netpbm convention.
"""

from pathlib import Path

import numpy as np

from .errors import PgmError

_WHITESPACE = b" \t\n\r\x0b\x0c"


def write_pgm(image: np.ndarray, path, maxval: int = 255) -> None:
    if maxval not in (255, 65535):
        raise ValueError(f"maxval must be 255 or 65535, got {maxval}")
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError(f"expected a 2-d grayscale image, got shape {image.shape}")
    if image.size and (image.min() < 0.0 or image.max() > 1.0):
        raise ValueError("image values must lie in [0, 1]")
    q = np.floor(image * maxval + 0.5).astype(np.uint32)  # round half up
    h, w = image.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    payload = q.astype(">u2" if maxval == 65535 else np.uint8).tobytes()
    Path(path).write_bytes(header + payload)


class _Scanner:
    """Tokenizer over the PGM header that tracks byte offsets for errors."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def skip_separators(self) -> None:
        # whitespace runs and '#' comments up to end of line
        while self.pos < len(self.data):
            c = self.data[self.pos : self.pos + 1]
            if c in (b"#",):
                nl = self.data.find(b"\n", self.pos)
                if nl < 0:
                    raise PgmError("unterminated comment", self.pos)
                self.pos = nl + 1
            elif c and c in _WHITESPACE:
                self.pos += 1
            else:
                return

    def token(self) -> bytes:
        self.skip_separators()
        start = self.pos
        while self.pos < len(self.data) and self.data[self.pos : self.pos + 1] not in _WHITESPACE:
            self.pos += 1
        if self.pos == start:
            raise PgmError("unexpected end of header", start)
        return self.data[start : self.pos]

    def int_token(self, what: str) -> int:
        self.skip_separators()
        start = self.pos
        tok = self.token()
        try:
            return int(tok)
        except ValueError:
            raise PgmError(f"invalid {what} {tok!r}", start) from None


def read_pgm(path) -> np.ndarray:
    """Read a binary P5 file into a float64 array in [0, 1]."""
    data = Path(path).read_bytes()
    sc = _Scanner(data)
    magic = sc.token()
    if magic != b"P5":
        raise PgmError(f"expected P5 magic, got {magic!r}", 0)
    width = sc.int_token("width")
    height = sc.int_token("height")
    sc.skip_separators()
    maxval_pos = sc.pos
    maxval = sc.int_token("maxval")
    if maxval not in (255, 65535):
        raise PgmError(f"unsupported maxval {maxval}", maxval_pos)
    if sc.pos >= len(data):
        raise PgmError("missing separator before payload", sc.pos)
    if data[sc.pos : sc.pos + 1] not in _WHITESPACE:
        raise PgmError("expected single whitespace before payload", sc.pos)
    sc.pos += 1
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype(np.uint8)
    need = width * height * dtype.itemsize
    payload = data[sc.pos : sc.pos + need]
    if len(payload) < need:
        raise PgmError(
            f"payload truncated: need {need} bytes, have {len(payload)}",
            sc.pos + len(payload),
        )
    raw = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return raw.astype(np.float64) / maxval

"""Binary PPM (P6) image I/O.

Images are float32 arrays [3, h, w] in [-1, 1]; bytes map via
round((x + 1) * 127.5) on write and x / 127.5 - 1 on read.
"""

import numpy as np


def to_bytes_img(img):
    arr = np.clip(np.asarray(img, dtype=np.float32), -1.0, 1.0)
    return np.rint((arr + 1.0) * 127.5).astype(np.uint8)


def from_bytes_img(raw):
    return raw.astype(np.float32) / 127.5 - 1.0


def write_ppm(path, img):
    """img: float array [3, h, w] in [-1, 1] or uint8 [3, h, w]."""
    arr = np.asarray(img)
    if arr.dtype != np.uint8:
        arr = to_bytes_img(arr)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"write_ppm: expected [3, h, w], got {arr.shape}")
    h, w = arr.shape[1], arr.shape[2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(np.ascontiguousarray(arr.transpose(1, 2, 0)).tobytes())


def read_ppm(path):
    """Returns a float32 array [3, h, w] in [-1, 1]."""
    with open(path, "rb") as f:
        data = f.read()
    # header: magic, dims, maxval, separated by whitespace (comments allowed)
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if fields[0] != b"P6":
        raise ValueError(f"read_ppm: not a binary PPM (magic {fields[0]!r})")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise ValueError(f"read_ppm: unsupported maxval {maxval}")
    pos += 1  # single whitespace byte after maxval
    raw = np.frombuffer(data, dtype=np.uint8, count=h * w * 3, offset=pos)
    return from_bytes_img(raw.reshape(h, w, 3).transpose(2, 0, 1))

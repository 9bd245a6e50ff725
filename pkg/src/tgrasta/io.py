"""File formats: PGM images, CSV tables, subspace matrices and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import re
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, ParseError, UnsupportedFormat
from .grassmann import Subspace
from .imaging import Group, Image, TransformParams

_WS = b" \t\r\n\v\f"
FRAME_GLOB = "*.pgm"


# ---------------------------------------------------------------- PGM

def _header_tokens(buf: bytes, start: int, count: int):
    """Read ``count`` whitespace-separated ASCII integers, skipping ``#`` comments.

    Returns the integers and the offset just past the last token.
    """
    out = []
    pos = start
    n = len(buf)
    while len(out) < count:
        while pos < n and (buf[pos] in _WS or buf[pos] == ord("#")):
            if buf[pos] == ord("#"):
                while pos < n and buf[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        if pos >= n:
            raise ParseError("unexpected end of header", pos)
        tok_start = pos
        while pos < n and buf[pos] not in _WS and buf[pos] != ord("#"):
            pos += 1
        tok = buf[tok_start:pos]
        if not tok.isdigit():
            raise ParseError(f"expected an unsigned integer, found {tok[:16]!r}", tok_start)
        out.append(int(tok))
    return out, pos


def parse_pgm(buf: bytes) -> Image:
    """Decode a P2 (ASCII) or P5 (binary) PGM held in memory."""
    if len(buf) < 2:
        raise ParseError("file too short for a PGM magic number", 0)
    magic = buf[:2]
    if magic not in (b"P2", b"P5"):
        raise UnsupportedFormat(f"unsupported image format {magic!r}; only P2 and P5 PGM are read")
    (width, height, maxval), pos = _header_tokens(buf, 2, 3)
    if width < 1 or height < 1:
        raise ParseError(f"bad image size {width}x{height}", 2)
    if not 1 <= maxval <= 65535:
        raise ParseError(f"maxval {maxval} outside 1..65535", pos)
    count = width * height

    if magic == b"P5":
        if pos >= len(buf) or buf[pos] not in _WS:
            raise ParseError("missing whitespace after maxval", pos)
        pos += 1
        bpp = 1 if maxval < 256 else 2
        need = count * bpp
        payload = buf[pos:pos + need]
        if len(payload) < need:
            raise ParseError(f"truncated pixel data: expected {need} bytes, got {len(payload)}", pos + len(payload))
        raw = np.frombuffer(payload, dtype=np.uint8 if bpp == 1 else ">u2").astype(np.float64)
    else:
        text = re.sub(rb"#[^\r\n]*", b"", buf[pos:])
        toks = text.split()
        if len(toks) < count:
            raise ParseError(f"expected {count} pixel values, got {len(toks)}", len(buf))
        try:
            raw = np.array([int(t) for t in toks[:count]], dtype=np.float64)
        except ValueError:
            raise ParseError("non-integer pixel value in P2 data", pos) from None
    if raw.max(initial=0) > maxval:
        raise ParseError(f"pixel value {int(raw.max())} exceeds maxval {maxval}", pos)
    return Image((raw / maxval).reshape(height, width))


def read_pgm(path) -> Image:
    with open(path, "rb") as fh:
        return parse_pgm(fh.read())


def encode_pgm(image: Image, maxval: int = 255) -> bytes:
    if not 1 <= maxval <= 65535:
        raise ValueError("maxval must lie in 1..65535")
    data = image.data if isinstance(image, Image) else Image(image).data
    q = np.round(data * maxval).astype(np.int64)
    h, w = data.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    payload = q.astype(np.uint8 if maxval < 256 else ">u2").tobytes()
    return header + payload


def write_pgm(image: Image, path, maxval: int = 255) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pgm(image, maxval))


def list_frames(directory) -> list:
    """PGM files in ``directory``, sorted by file name."""
    paths = sorted(Path(directory).glob(FRAME_GLOB), key=lambda p: p.name)
    if not paths:
        raise FileNotFoundError(f"no .pgm frames in {directory}")
    return paths


# ---------------------------------------------------------------- CSV

def fmt(x) -> str:
    """Locale-independent, round-trippable number formatting."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty CSV", 0)
    return rows[0], rows[1:]


def transform_header(group: Group):
    return ["frame", "group"] + [f"p{k}" for k in range(group.p)]


def write_transforms(path, names, taus, extra_header=(), extra=None) -> None:
    group = taus[0].group if taus else Group.EUCLIDEAN
    rows = []
    for i, (name, tau) in enumerate(zip(names, taus)):
        row = [name, tau.group.value, *tau.params]
        if extra is not None:
            row += list(extra[i])
        rows.append(row)
    write_csv(path, transform_header(group) + list(extra_header), rows)


def read_transforms(path):
    """Return ``(names, taus)`` from a CSV with frame, group, p0.. columns."""
    header, rows = read_csv(path)
    if header[:2] != ["frame", "group"]:
        raise ParseError(f"{path}: expected columns 'frame,group,p0,...'", 0)
    names, taus = [], []
    for k, row in enumerate(rows, start=2):
        group = Group.parse(row[1])
        try:
            params = [float(v) for v in row[2:2 + group.p]]
        except ValueError:
            raise ParseError(f"{path}: non-numeric parameter on line {k}") from None
        if len(params) != group.p:
            raise ParseError(f"{path}: line {k} has {len(params)} parameters, {group.value} needs {group.p}")
        names.append(row[0])
        taus.append(TransformParams(group, params))
    return names, taus


# ---------------------------------------------------------------- subspaces

def write_subspace(U: Subspace, path, meta=None) -> None:
    """Text matrix: ``# key = value`` comment lines, an ``n d`` header, then n rows of d values."""
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in sorted((meta or {}).items()):
            fh.write(f"# {key} = {value}\n")
        fh.write(f"{U.n} {U.d}\n")
        for row in U.basis:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_subspace(path):
    """Return ``(Subspace, meta)`` where ``meta`` holds the ``# key = value`` comments as strings."""
    meta = {}
    rows = []
    shape = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = re.match(r"#\s*(\w+)\s*=\s*(.*?)\s*$", line)
                if m:
                    meta[m.group(1)] = m.group(2)
                continue
            vals = line.split()
            if shape is None:
                if len(vals) != 2 or not all(v.isdigit() for v in vals):
                    raise ParseError(f"{path}: line {lineno}: expected an 'n d' header")
                shape = (int(vals[0]), int(vals[1]))
                continue
            try:
                rows.append([float(v) for v in vals])
            except ValueError:
                raise ParseError(f"{path}: line {lineno}: non-numeric entry") from None
    if shape is None:
        raise ParseError(f"{path}: missing 'n d' header")
    basis = np.array(rows, dtype=np.float64).reshape(-1, shape[1]) if rows else np.empty((0, shape[1]))
    if basis.shape != shape:
        raise DimensionMismatch(f"{path}: header says {shape}, data is {basis.shape}")
    return Subspace(basis), meta


# ---------------------------------------------------------------- manifest

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(path, command, params, inputs, outputs, extra=None) -> None:
    """JSON record of a run: parameters, seeds, and sha256 of every input and output."""
    out_dir = Path(path).parent
    doc = {
        "command": command,
        "params": params,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {os.path.relpath(p, out_dir): sha256_file(p) for p in outputs},
    }
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")

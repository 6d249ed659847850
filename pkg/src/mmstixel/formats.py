"""Canonical on-disk formats.

Every document is line-based text starting with ``<kind> <version>``. Blank
lines and lines starting with ``#`` are ignored. Floats are written with
``repr`` so a write/read round trip is exact. Malformed input raises
:class:`FormatError` naming the file, line and column.

Scan::

    mmstixel-scan 1
    height 3
    columns 1
    lidar_classes road:GROUND car:OBJECT sky:SKY
    camera_classes road:GROUND car:OBJECT sky:SKY
    stixel_classes road:GROUND car:OBJECT sky:SKY
    lidar_map none
    camera_map none
    column 0.0
    6.2 -0.3 0.0 | 0.9 0.05 0.05 | absent
    inv 0.1 0.0 | 0.0 0.0 1.0 | 0.0 0.0 1.0
    ...

A class map is either ``none`` (resolved by label names at solve time) or
``matrix`` followed by one ``row`` line per input class.

World::

    mmstixel-world 1
    height 3
    classes road:GROUND car:OBJECT sky:SKY
    column 0
    1 1 5.8 road GROUND
    2 2 6.0 car OBJECT
    3 3 inf sky SKY

A stixel distance is a float, ``inf`` (SKY) or ``none`` (no valid return).
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .metrics import UNLABELED, EvalReport
from .model import (DEFAULT_PALETTE, SCALAR_PARAMS, ClassSet, ModelParams, Scan, Stixel,
                    StixelColumn, StixelWorld, StructuralClass, world_problems)
from .prior import consistency_check
from .synthetic import Obstacle, SceneSpec

SCAN_MAGIC = "mmstixel-scan"
WORLD_MAGIC = "mmstixel-world"
LABELS_MAGIC = "mmstixel-labels"
PARAMS_MAGIC = "mmstixel-params"
SCENE_MAGIC = "mmstixel-scene"
REPORT_MAGIC = "mmstixel-report"
VERSION = 1

#: largest image render() will produce
MAX_PIXELS = 1 << 26

PathLike = str | os.PathLike


class FormatError(ValueError):
    """A document that does not follow its format; carries the position."""

    def __init__(self, message: str, source: str = "<string>", line: int | None = None,
                 column: int | None = None):
        self.message = message
        self.source = source
        self.line = line
        self.column = column
        where = source
        if line is not None:
            where += f":{line}"
            if column is not None:
                where += f":{column}"
        super().__init__(f"{where}: {message}")


# ---------------------------------------------------------------- tokenizing

@dataclass(frozen=True)
class _Token:
    text: str
    column: int


class _Line:
    def __init__(self, number: int, text: str, source: str):
        self.number = number
        self.source = source
        self.tokens: list[_Token] = []
        i = 0
        while i < len(text):
            if text[i].isspace():
                i += 1
                continue
            start = i
            while i < len(text) and not text[i].isspace():
                i += 1
            self.tokens.append(_Token(text[start:i], start + 1))
        self.end_column = len(text.rstrip()) + 1

    @property
    def key(self) -> str:
        return self.tokens[0].text

    def error(self, message: str, token: int | None = None) -> FormatError:
        col = self.tokens[token].column if token is not None and token < len(self.tokens) else self.end_column
        return FormatError(message, self.source, self.number, col)

    def expect_count(self, n: int, what: str) -> None:
        if len(self.tokens) != n:
            raise self.error(f"{what} takes {n - 1} value(s), got {len(self.tokens) - 1}",
                             min(len(self.tokens), n))

    def float_at(self, i: int, what: str) -> float:
        try:
            return float(self.tokens[i].text)
        except IndexError:
            raise self.error(f"missing {what}") from None
        except ValueError:
            raise self.error(f"{what} is not a number: {self.tokens[i].text!r}", i) from None

    def int_at(self, i: int, what: str) -> int:
        try:
            return int(self.tokens[i].text)
        except IndexError:
            raise self.error(f"missing {what}") from None
        except ValueError:
            raise self.error(f"{what} is not an integer: {self.tokens[i].text!r}", i) from None


class _Reader:
    """Cursor over the significant lines of one document."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines = [_Line(n, raw, source) for n, raw in enumerate(text.splitlines(), 1)
                      if raw.strip() and not raw.lstrip().startswith("#")]
        self.pos = 0

    def peek(self) -> _Line | None:
        return self.lines[self.pos] if self.pos < len(self.lines) else None

    def next(self, what: str) -> _Line:
        line = self.peek()
        if line is None:
            last = self.lines[-1].number if self.lines else 0
            raise FormatError(f"unexpected end of file, expected {what}", self.source, last + 1, 1)
        self.pos += 1
        return line

    def magic(self, magic: str) -> None:
        line = self.next(f"'{magic} {VERSION}' header")
        if line.key != magic:
            raise line.error(f"expected '{magic}' header, got {line.key!r}", 0)
        line.expect_count(2, magic)
        version = line.int_at(1, "format version")
        if version != VERSION:
            raise line.error(f"unsupported {magic} version {version} (this reader knows {VERSION})", 1)

    def header(self, required: Sequence[str], optional: Sequence[str] = (), stop: str | None = None
               ) -> dict[str, _Line]:
        """Read ``key ...`` lines until ``stop`` (or the end); every required key must appear once."""
        found: dict[str, _Line] = {}
        allowed = set(required) | set(optional)
        while (line := self.peek()) is not None and line.key != stop:
            if line.key not in allowed:
                break
            if line.key in found:
                raise line.error(f"duplicate header field {line.key!r}", 0)
            found[line.key] = line
            self.pos += 1
        for key in required:
            if key not in found:
                line = self.peek()
                where = line.number if line else (self.lines[-1].number + 1 if self.lines else 1)
                raise FormatError(f"missing header field {key!r}", self.source, where, 1)
        return found


def _source(path: PathLike) -> str:
    return os.fspath(path)


def _read_text(path: PathLike) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write_text(path: PathLike, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def _f(x: float) -> str:
    """Exact text form of a float (``repr`` round-trips every double)."""
    return repr(float(x))


# --------------------------------------------------------------- class sets

def _format_classes(classes: ClassSet) -> str:
    return " ".join(f"{n}:{s.name}" for n, s in zip(classes.names, classes.structural))


def _parse_classes(line: _Line) -> ClassSet:
    if len(line.tokens) < 2:
        raise line.error(f"{line.key} needs at least one label")
    names, structural = [], []
    for i, tok in enumerate(line.tokens[1:], 1):
        name, sep, sclass = tok.text.rpartition(":")
        if not sep or not name:
            raise line.error(f"expected label:CLASS, got {tok.text!r}", i)
        try:
            structural.append(StructuralClass[sclass])
        except KeyError:
            raise line.error(f"unknown structural class {sclass!r}", i) from None
        names.append(name)
    try:
        return ClassSet(tuple(names), tuple(structural))
    except ValueError as exc:
        raise line.error(str(exc), 1) from None


def _format_map(key: str, m: np.ndarray | None) -> list[str]:
    if m is None:
        return [f"{key} none"]
    return [f"{key} matrix"] + ["row " + " ".join(_f(v) for v in r) for r in m]


def _parse_map(reader: _Reader, line: _Line, n_rows: int, n_cols: int) -> np.ndarray | None:
    line.expect_count(2, line.key)
    kind = line.tokens[1].text
    if kind == "none":
        return None
    if kind != "matrix":
        raise line.error(f"{line.key} must be 'none' or 'matrix', got {kind!r}", 1)
    rows = []
    for _ in range(n_rows):
        r = reader.next(f"{line.key} row")
        if r.key != "row":
            raise r.error(f"expected 'row' of {line.key}, got {r.key!r}", 0)
        r.expect_count(n_cols + 1, "row")
        rows.append([r.float_at(i, "class map entry") for i in range(1, n_cols + 1)])
    return np.array(rows, dtype=float).reshape(n_rows, n_cols)


# --------------------------------------------------------------------- scan

def dumps_scan(scan: Scan) -> str:
    out = [f"{SCAN_MAGIC} {VERSION}", f"height {scan.height}", f"columns {scan.width}",
           f"lidar_classes {_format_classes(scan.lidar_classes)}",
           f"camera_classes {_format_classes(scan.cam_classes)}",
           f"stixel_classes {_format_classes(scan.stixel_classes)}"]
    out += _format_map("lidar_map", scan.lidar_class_map)
    out += _format_map("camera_map", scan.cam_class_map)

    def probs(p: np.ndarray) -> str:
        return "absent" if np.isnan(p).all() else " ".join(_f(v) for v in p)

    for i in range(scan.width):
        out.append(f"column {_f(scan.column_azimuth[i])}")
        for j in range(scan.height):
            r = scan.ranges[i, j]
            out.append(f"{'inv' if np.isnan(r) else _f(r)} {_f(scan.elevation[i, j])} {_f(scan.azimuth[i, j])}"
                       f" | {probs(scan.lidar_probs[i, j])} | {probs(scan.cam_probs[i, j])}")
    return "\n".join(out) + "\n"


def _parse_record(line: _Line, k_lidar: int, k_cam: int) -> tuple[float, float, float, list[float], list[float]]:
    toks = line.tokens
    bars = [i for i, t in enumerate(toks) if t.text == "|"]
    if len(bars) != 2:
        raise line.error("a measurement record needs 'range elevation azimuth | lidar | camera'")
    if bars[0] != 3:
        raise line.error("expected 'range elevation azimuth' before the first '|'", min(bars[0], 3))
    r_tok = toks[0].text
    r = math.nan if r_tok == "inv" else line.float_at(0, "range")
    if r_tok != "inv" and not (math.isfinite(r) and r > 0):
        raise line.error(f"range must be finite and > 0 or 'inv', got {r_tok!r}", 0)
    el = line.float_at(1, "elevation")
    az = line.float_at(2, "azimuth")

    def probs(lo: int, hi: int, k: int, what: str) -> list[float]:
        if hi - lo == 1 and toks[lo].text == "absent":
            return [math.nan] * k
        if hi - lo != k:
            raise line.error(f"{what} distribution needs {k} values or 'absent', got {hi - lo}", lo)
        vals = [line.float_at(i, f"{what} probability") for i in range(lo, hi)]
        if any(math.isnan(v) for v in vals):
            raise line.error(f"{what} probability is nan", lo)
        return vals

    return (r, el, az, probs(bars[0] + 1, bars[1], k_lidar, "lidar"),
            probs(bars[1] + 1, len(toks), k_cam, "camera"))


def loads_scan(text: str, source: str = "<string>") -> Scan:
    rd = _Reader(text, source)
    rd.magic(SCAN_MAGIC)
    required = ("height", "columns", "lidar_classes", "camera_classes", "stixel_classes",
                "lidar_map", "camera_map")
    hdr: dict[str, _Line] = {}
    map_rows: dict[str, _Reader] = {}
    while (line := rd.peek()) is not None and line.key in required:
        rd.pos += 1
        if line.key in hdr:
            raise line.error(f"duplicate header field {line.key!r}", 0)
        hdr[line.key] = line
        if line.key.endswith("_map"):
            # the matrix rows follow their keyword; set them aside until the class sets are known
            start = rd.pos
            while (r := rd.peek()) is not None and r.key == "row":
                rd.pos += 1
            sub = _Reader("", source)
            sub.lines = rd.lines[start:rd.pos]
            map_rows[line.key] = sub
    for key in required:
        if key not in hdr:
            line = rd.peek()
            where = line.number if line else (rd.lines[-1].number + 1 if rd.lines else 1)
            raise FormatError(f"missing header field {key!r}", source, where, 1)
    for key in ("height", "columns"):
        hdr[key].expect_count(2, key)
    h = hdr["height"].int_at(1, "height")
    w = hdr["columns"].int_at(1, "columns")
    if h < 0 or w < 0:
        raise hdr["height" if h < 0 else "columns"].error("must be >= 0", 1)
    lidar_classes = _parse_classes(hdr["lidar_classes"])
    cam_classes = _parse_classes(hdr["camera_classes"])
    stixel_classes = _parse_classes(hdr["stixel_classes"])
    maps = {}
    for key, n_rows in (("lidar_map", len(lidar_classes)), ("camera_map", len(cam_classes))):
        sub = map_rows[key]
        maps[key] = _parse_map(sub, hdr[key], n_rows, len(stixel_classes))
        extra = sub.peek()
        if extra is not None:
            raise extra.error(f"{key} has more than {n_rows} rows", 0)
    lidar_map, cam_map = maps["lidar_map"], maps["camera_map"]

    kl, kc = len(lidar_classes), len(cam_classes)
    ranges = np.empty((w, h))
    elevation = np.empty((w, h))
    azimuth = np.empty((w, h))
    lidar = np.empty((w, h, kl))
    cam = np.empty((w, h, kc))
    col_az = np.empty(w)
    for i in range(w):
        line = rd.next(f"column {i}")
        if line.key != "column":
            raise line.error(f"expected 'column <azimuth>', got {line.key!r}", 0)
        line.expect_count(2, "column")
        col_az[i] = line.float_at(1, "column azimuth")
        for j in range(h):
            rec = rd.next(f"record {j + 1} of column {i}")
            if rec.key == "column":
                raise rec.error(f"column {i} has {j} records, expected {h}", 0)
            ranges[i, j], elevation[i, j], azimuth[i, j], lidar[i, j], cam[i, j] = _parse_record(rec, kl, kc)
    extra = rd.peek()
    if extra is not None:
        raise extra.error(f"unexpected content after {w} columns", 0)
    try:
        return Scan(ranges, elevation, azimuth, lidar, cam, col_az, lidar_classes, cam_classes,
                    stixel_classes, lidar_map, cam_map)
    except ValueError as exc:
        raise FormatError(str(exc), source) from None


def write_scan(scan: Scan, path: PathLike) -> None:
    _write_text(path, dumps_scan(scan))


def read_scan(path: PathLike) -> Scan:
    return loads_scan(_read_text(path), _source(path))


# -------------------------------------------------------------------- world

def _format_distance(s: Stixel) -> str:
    if s.distance is None:
        return "none"
    if math.isinf(s.distance):
        return "inf"
    return _f(s.distance)


def dumps_world(world: StixelWorld) -> str:
    out = [f"{WORLD_MAGIC} {VERSION}", f"height {world.height}", f"classes {_format_classes(world.classes)}"]
    for col in world:
        out.append(f"column {col.index}")
        for s in col:
            out.append(f"{s.bottom} {s.top} {_format_distance(s)} {s.label} {s.sclass.name}")
    return "\n".join(out) + "\n"


def loads_world(text: str, source: str = "<string>") -> StixelWorld:
    rd = _Reader(text, source)
    rd.magic(WORLD_MAGIC)
    hdr = rd.header(["height", "classes"], stop="column")
    hdr["height"].expect_count(2, "height")
    h = hdr["height"].int_at(1, "height")
    classes = _parse_classes(hdr["classes"])
    columns = []
    while (line := rd.peek()) is not None:
        rd.pos += 1
        if line.key != "column":
            raise line.error(f"expected 'column <index>', got {line.key!r}", 0)
        line.expect_count(2, "column")
        index = line.int_at(1, "column index")
        if index != len(columns):
            raise line.error(f"column index {index} out of order, expected {len(columns)}", 1)
        stixels = []
        while (rec := rd.peek()) is not None and rec.key != "column":
            rd.pos += 1
            rec.expect_count(5, "stixel record 'bottom top distance label class'")
            b, t = rec.int_at(0, "bottom"), rec.int_at(1, "top")
            d_tok = rec.tokens[2].text
            d = None if d_tok == "none" else math.inf if d_tok == "inf" else rec.float_at(2, "distance")
            label = rec.tokens[3].text
            try:
                sclass = StructuralClass[rec.tokens[4].text]
            except KeyError:
                raise rec.error(f"unknown structural class {rec.tokens[4].text!r}", 4) from None
            stixels.append(Stixel(b, t, d, label, sclass))
        col = StixelColumn(tuple(stixels), index)
        problem = consistency_check(col, h)
        if problem is not None:
            raise line.error(f"column {index}: {problem}", 0)
        columns.append(col)
    world = StixelWorld(tuple(columns), h, classes)
    problems = world_problems(world)
    if problems:
        raise FormatError(problems[0], source)
    return world


def write_world(world: StixelWorld, path: PathLike) -> None:
    _write_text(path, dumps_world(world))


def read_world(path: PathLike) -> StixelWorld:
    return loads_world(_read_text(path), _source(path))


# ------------------------------------------------------------- point labels

def dumps_labels(labels: np.ndarray, classes: ClassSet) -> str:
    """Per-point reference labels, one line per column; ``-`` marks unlabeled."""
    labels = np.asarray(labels)
    w, h = labels.shape
    out = [f"{LABELS_MAGIC} {VERSION}", f"classes {_format_classes(classes)}", f"columns {w}", f"height {h}"]
    for row in labels:
        out.append(" ".join("-" if k == UNLABELED else classes.names[k] for k in row))
    return "\n".join(out) + "\n"


def loads_labels(text: str, source: str = "<string>") -> tuple[np.ndarray, ClassSet]:
    rd = _Reader(text, source)
    rd.magic(LABELS_MAGIC)
    hdr = rd.header(["classes", "columns", "height"])
    classes = _parse_classes(hdr["classes"])
    for key in ("columns", "height"):
        hdr[key].expect_count(2, key)
    w, h = hdr["columns"].int_at(1, "columns"), hdr["height"].int_at(1, "height")
    index = {n: i for i, n in enumerate(classes.names)}
    index["-"] = UNLABELED
    out = np.empty((w, h), dtype=np.int64)
    for i in range(w):
        line = rd.next(f"labels of column {i}")
        line.expect_count(h, f"column {i} labels")
        for j, tok in enumerate(line.tokens):
            try:
                out[i, j] = index[tok.text]
            except KeyError:
                raise line.error(f"unknown label {tok.text!r}", j) from None
    extra = rd.peek()
    if extra is not None:
        raise extra.error(f"unexpected content after {w} columns", 0)
    return out, classes


def write_labels(labels: np.ndarray, classes: ClassSet, path: PathLike) -> None:
    _write_text(path, dumps_labels(labels, classes))


def read_labels(path: PathLike) -> tuple[np.ndarray, ClassSet]:
    return loads_labels(_read_text(path), _source(path))


# --------------------------------------------------------------- parameters

def dumps_params(params: ModelParams) -> str:
    """Canonical parameter text; class maps belong to the scan and are not written."""
    out = [f"{PARAMS_MAGIC} {VERSION}"]
    out += [f"{k} {_f(v)}" for k, v in params.scalar_items()]
    return "\n".join(out) + "\n"


def loads_params(text: str, source: str = "<string>", base: ModelParams | None = None) -> ModelParams:
    """Parse a parameter file; keys it omits keep their value from ``base``."""
    rd = _Reader(text, source)
    rd.magic(PARAMS_MAGIC)
    values: dict[str, float] = {}
    while (line := rd.peek()) is not None:
        rd.pos += 1
        if line.key not in SCALAR_PARAMS:
            raise line.error(f"unknown parameter {line.key!r}", 0)
        if line.key in values:
            raise line.error(f"duplicate parameter {line.key!r}", 0)
        line.expect_count(2, line.key)
        values[line.key] = line.float_at(1, line.key)
    base = base or ModelParams()
    kwargs = {f.name: getattr(base, f.name) for f in fields(ModelParams)}
    kwargs.update(values)
    try:
        return ModelParams(**kwargs)
    except ValueError as exc:
        raise FormatError(str(exc), source) from None


def write_params(params: ModelParams, path: PathLike) -> None:
    _write_text(path, dumps_params(params))


def read_params(path: PathLike, base: ModelParams | None = None) -> ModelParams:
    return loads_params(_read_text(path), _source(path), base)


def params_hash(params: ModelParams) -> str:
    """SHA-256 of the canonical parameter text, for provenance in reports."""
    return hashlib.sha256(dumps_params(params).encode()).hexdigest()


def default_params_path() -> Path:
    return Path(__file__).with_name("data") / "default_params.txt"


# --------------------------------------------------------------- scene spec

_SCENE_INT = ("rows", "columns", "lidar_jitter_rows", "cam_row_offset", "seed")
_SCENE_STR = ("ground_label",)


def dumps_scene(spec: SceneSpec) -> str:
    out = [f"{SCENE_MAGIC} {VERSION}"]
    for f in fields(SceneSpec):
        if f.name == "obstacles":
            continue
        v = getattr(spec, f.name)
        out.append(f"{f.name} {v if f.name in _SCENE_INT + _SCENE_STR else _f(v)}")
    out.append(f"obstacles {len(spec.obstacles)}")
    for ob in spec.obstacles:
        out.append(f"obstacle {_f(ob.azimuth_min)} {_f(ob.azimuth_max)} {_f(ob.range_m)} {_f(ob.height_m)} {ob.label}")
    return "\n".join(out) + "\n"


def loads_scene(text: str, source: str = "<string>") -> SceneSpec:
    """Parse a scene spec; omitted keys keep their defaults, and so do the
    obstacles unless an ``obstacles <count>`` line is present."""
    rd = _Reader(text, source)
    rd.magic(SCENE_MAGIC)
    names = {f.name for f in fields(SceneSpec)} - {"obstacles"}
    kwargs: dict = {}
    obstacles = None
    while (line := rd.peek()) is not None:
        rd.pos += 1
        key = line.key
        if key == "obstacles":
            if obstacles is not None:
                raise line.error("duplicate 'obstacles' line", 0)
            line.expect_count(2, "obstacles")
            n = line.int_at(1, "obstacle count")
            obstacles = []
            for k in range(n):
                ob = rd.next(f"obstacle {k + 1} of {n}")
                if ob.key != "obstacle":
                    raise ob.error(f"expected 'obstacle', got {ob.key!r}", 0)
                ob.expect_count(6, "obstacle 'azimuth_min azimuth_max range height label'")
                obstacles.append(Obstacle(ob.float_at(1, "azimuth_min"), ob.float_at(2, "azimuth_max"),
                                          ob.float_at(3, "range"), ob.float_at(4, "height"), ob.tokens[5].text))
            continue
        if key not in names:
            raise line.error(f"unknown scene field {key!r}", 0)
        if key in kwargs:
            raise line.error(f"duplicate scene field {key!r}", 0)
        line.expect_count(2, key)
        if key in _SCENE_INT:
            kwargs[key] = line.int_at(1, key)
        elif key in _SCENE_STR:
            kwargs[key] = line.tokens[1].text
        else:
            kwargs[key] = line.float_at(1, key)
    if obstacles is not None:
        kwargs["obstacles"] = tuple(obstacles)
    try:
        return SceneSpec(**kwargs)
    except ValueError as exc:
        raise FormatError(str(exc), source) from None


def write_scene(spec: SceneSpec, path: PathLike) -> None:
    _write_text(path, dumps_scene(spec))


def read_scene(path: PathLike) -> SceneSpec:
    return loads_scene(_read_text(path), _source(path))


# ------------------------------------------------------------------ reports

_REPORT_FLOATS = ("outlier_rate", "mean_iou", "compression_rate")
_REPORT_INTS = ("n_points", "n_valid_points", "n_stixels")


def dumps_report(report: EvalReport) -> str:
    out = [f"{REPORT_MAGIC} {VERSION}"]
    out += [f"{k} {_f(getattr(report, k))}" for k in _REPORT_FLOATS]
    out += [f"{k} {getattr(report, k)}" for k in _REPORT_INTS]
    out += [f"iou {name} {_f(v)}" for name, v in report.iou_per_class.items()]
    for k, v in report.extra.items():
        if not k or any(c.isspace() for c in k) or "\n" in v:
            raise ValueError(f"report field {k!r} cannot be written on one line")
        out.append(f"meta {k} {v}")
    return "\n".join(out) + "\n"


def loads_report(text: str, source: str = "<string>") -> EvalReport:
    rd = _Reader(text, source)
    rd.magic(REPORT_MAGIC)
    hdr = rd.header(_REPORT_FLOATS + _REPORT_INTS)
    kwargs: dict = {}
    for k in _REPORT_FLOATS:
        hdr[k].expect_count(2, k)
        kwargs[k] = hdr[k].float_at(1, k)
    for k in _REPORT_INTS:
        hdr[k].expect_count(2, k)
        kwargs[k] = hdr[k].int_at(1, k)
    per_class: dict[str, float] = {}
    extra: dict[str, str] = {}
    while (line := rd.peek()) is not None:
        rd.pos += 1
        if line.key == "iou":
            line.expect_count(3, "iou")
            per_class[line.tokens[1].text] = line.float_at(2, "IoU")
        elif line.key == "meta":
            if len(line.tokens) < 3:
                raise line.error("meta needs a key and a value")
            extra[line.tokens[1].text] = " ".join(t.text for t in line.tokens[2:])
        else:
            raise line.error(f"unexpected report line {line.key!r}", 0)
    return EvalReport(iou_per_class=per_class, extra=extra, **kwargs)


def write_report(report: EvalReport, path: PathLike) -> None:
    _write_text(path, dumps_report(report))


def read_report(path: PathLike) -> EvalReport:
    return loads_report(_read_text(path), _source(path))


# ------------------------------------------------------------ sweep tables

TABLE_FIELDS = ("name", "value", "outlier_rate", "mean_iou", "compression_rate", "n_stixels")


def dumps_table(rows: Sequence) -> str:
    """Comma-separated table of sweep or ablation rows (objects with TABLE_FIELDS)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TABLE_FIELDS)
    for r in rows:
        writer.writerow([r.name] + [_f(getattr(r, k)) for k in TABLE_FIELDS[1:5]] + [r.n_stixels])
    return buf.getvalue()


def write_table(rows: Sequence, path: PathLike) -> None:
    _write_text(path, dumps_table(rows))


# ---------------------------------------------------------------- rendering

def label_color(name: str, palette: dict[str, tuple[int, int, int]] | None = None) -> tuple[int, int, int]:
    """Palette color of a label; labels without one get a stable hash color."""
    palette = DEFAULT_PALETTE if palette is None else palette
    if name in palette:
        return tuple(int(c) for c in palette[name])
    digest = hashlib.sha256(name.encode()).digest()
    return digest[0], digest[1], digest[2]


def render_array(world: StixelWorld, palette: dict[str, tuple[int, int, int]] | None = None,
                 upscale: int = 1) -> np.ndarray:
    """(H, W, 3) uint8 image; image row 0 is the top scan row."""
    if upscale < 1:
        raise ValueError("upscale must be >= 1")
    w, h = len(world), world.height
    if w * upscale * h * upscale > MAX_PIXELS:
        raise ValueError(f"image of {w * upscale}x{h * upscale} pixels exceeds the {MAX_PIXELS} pixel limit")
    colors = np.array([label_color(n, palette) for n in world.classes.names] or [(0, 0, 0)], dtype=np.uint8)
    grid = world.label_grid()
    img = np.zeros((h, w, 3), dtype=np.uint8)
    covered = grid >= 0
    img[covered.T] = colors[grid.T[covered.T]]
    img = img[::-1]
    if upscale > 1:
        img = img.repeat(upscale, axis=0).repeat(upscale, axis=1)
    return img


def render_ppm(world: StixelWorld, palette: dict[str, tuple[int, int, int]] | None = None,
               upscale: int = 1) -> bytes:
    img = render_array(world, palette, upscale)
    return f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii") + img.tobytes()


def render(world: StixelWorld, scan: Scan | None, path: PathLike,
           palette: dict[str, tuple[int, int, int]] | None = None, upscale: int = 1) -> None:
    """Write a binary portable pixmap: one pixel column per scan column,
    each pixel colored by the label of its covering stixel."""
    if scan is not None and (scan.width != len(world) or scan.height != world.height):
        raise ValueError(f"world is {len(world)}x{world.height} but scan is {scan.width}x{scan.height}")
    Path(path).write_bytes(render_ppm(world, palette, upscale))


def read_ppm(data: bytes) -> np.ndarray:
    """Decode a P6 image written by :func:`render_ppm` into (H, W, 3) uint8."""
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P6" or parts[2] != b"255":
        raise FormatError("not a P6 image with maxval 255")
    w, h = (int(x) for x in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != w * h * 3:
        raise FormatError(f"P6 payload holds {pixels.size} bytes, expected {w * h * 3}")
    return pixels.reshape(h, w, 3)


def iter_columns_text(world: StixelWorld) -> Iterator[str]:
    """Human-readable one-line summary per column, used by the CLI."""
    for col in world:
        yield f"{col.index}: " + " ".join(f"[{s.bottom}-{s.top} {s.label} {_format_distance(s)}]" for s in col)

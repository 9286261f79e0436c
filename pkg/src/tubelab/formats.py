"""Text serialization with strict, line-numbered parsing.

Four formats, all line-oriented plain text:

* KGS v1: a cell set.  Header ``kgs 1 <n> <k>``, then one cell per line as n
  space-separated signed integers in lexicographic order.
* KTF v1: a tube family.  Header ``ktf 1 <n> <k> <count>``, then per tube a
  ``line <p...> <v...>`` record (floats to 12 decimal places) followed by a
  KGS block holding its shading at the family's grid.
* KHG v1: a k-partite hypergraph.  Header ``khg 1 <k>``, a line of part
  sizes, then edges as index tuples.
* CSV tables: comma-separated numeric tables with a header row, numbers to
  12 significant digits, '\\n' line endings.

Readers reject what they cannot represent (duplicates, out-of-range
coordinates or vertex indices, malformed records) and every rejection is a
ParseError carrying the 1-based line number.  Writers emit canonical bytes,
so read-then-write is the identity on files a writer produced.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Sequence

import numpy as np

from tubelab.grid import CellSet, Resolution
from tubelab.hypergraph import KPartiteHypergraph
from tubelab.tubes import LineL, Tube, TubeFamily, rasterize

__all__ = [
    "FORMAT_VERSIONS",
    "ParseError",
    "Table",
    "fmt_float",
    "read_kgs",
    "write_kgs",
    "read_ktf",
    "write_ktf",
    "read_khg",
    "write_khg",
    "read_table",
    "write_table",
    "convert",
]

FORMAT_VERSIONS = {"kgs": 1, "ktf": 1, "khg": 1, "csv": 1}


class ParseError(ValueError):
    """Rejected input; `line` is the 1-based line number of the problem."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def fmt_float(x: float) -> str:
    """12 significant digits, '.' separator; integral values print bare."""
    return f"{float(x):.12g}"


def _fixed(x: float) -> str:
    return f"{float(x):.12f}"


def _ints(lineno: int, tokens: Sequence[str], what: str) -> list[int]:
    out = []
    for t in tokens:
        try:
            out.append(int(t))
        except ValueError:
            raise ParseError(lineno, f"{what}: {t!r} is not an integer") from None
    return out


def _floats(lineno: int, tokens: Sequence[str], what: str) -> list[float]:
    out = []
    for t in tokens:
        try:
            out.append(float(t))
        except ValueError:
            raise ParseError(lineno, f"{what}: {t!r} is not a number") from None
    return out


class _Cursor:
    """Content lines of a text with their original 1-based numbers.

    Blank lines and '#' comment lines are skipped, so reports that prepend
    metadata comments to a serialized object stay machine-readable.
    """

    def __init__(self, text: str):
        self.items = [
            (i, line.split())
            for i, line in enumerate(text.splitlines(), start=1)
            if line.strip() and not line.lstrip().startswith("#")
        ]
        self.pos = 0
        self.end_line = text.count("\n") + 1

    def done(self) -> bool:
        return self.pos >= len(self.items)

    def peek(self) -> tuple[int, list[str]]:
        return self.items[self.pos]

    def take(self, missing: str) -> tuple[int, list[str]]:
        if self.done():
            raise ParseError(self.end_line, f"unexpected end of file, expected {missing}")
        item = self.items[self.pos]
        self.pos += 1
        return item


# -- KGS ---------------------------------------------------------------------------


def write_kgs(E: CellSet) -> str:
    lines = [f"kgs 1 {E.res.n} {E.res.k}"]
    lines.extend(" ".join(str(c) for c in row) for row in E.cells.tolist())
    return "\n".join(lines) + "\n"


def _parse_kgs_header(lineno: int, tokens: Sequence[str]) -> Resolution:
    if len(tokens) != 4 or tokens[0] != "kgs":
        raise ParseError(lineno, f"expected 'kgs 1 <n> <k>', got {' '.join(tokens)!r}")
    if tokens[1] != "1":
        raise ParseError(lineno, f"unsupported kgs version {tokens[1]!r}")
    n, k = _ints(lineno, tokens[2:], "kgs header")
    try:
        return Resolution(k, n)
    except ValueError as exc:
        raise ParseError(lineno, str(exc)) from None


def _parse_cells(cur: _Cursor, res: Resolution, stop_at_line_record: bool) -> CellSet:
    rows: list[list[int]] = []
    seen: set[tuple[int, ...]] = set()
    while not cur.done():
        lineno, tokens = cur.peek()
        if stop_at_line_record and tokens[0] == "line":
            break
        cur.pos += 1
        if len(tokens) != res.n:
            raise ParseError(lineno, f"expected {res.n} integers, got {len(tokens)}")
        cell = _ints(lineno, tokens, "cell")
        if max(abs(c) for c in cell) > res.index_bound:
            raise ParseError(lineno, f"coordinate out of range (bound {res.index_bound})")
        key = tuple(cell)
        if key in seen:
            raise ParseError(lineno, f"duplicate cell {' '.join(tokens)}")
        seen.add(key)
        rows.append(cell)
    if not rows:
        return CellSet.empty(res)
    return CellSet(res, np.array(rows, dtype=np.int64))


def read_kgs(text: str) -> CellSet:
    cur = _Cursor(text)
    lineno, tokens = cur.take("kgs header")
    res = _parse_kgs_header(lineno, tokens)
    return _parse_cells(cur, res, stop_at_line_record=False)


# -- KTF ---------------------------------------------------------------------------


def write_ktf(F: TubeFamily) -> str:
    parts = [f"ktf 1 {F.res.n} {F.res.k} {len(F)}\n"]
    for tube, shading in F.entries():
        coords = list(tube.line.p) + list(tube.line.v)
        parts.append("line " + " ".join(_fixed(x) for x in coords) + "\n")
        parts.append(write_kgs(shading))
    return "".join(parts)


def read_ktf(text: str) -> TubeFamily:
    cur = _Cursor(text)
    lineno, tokens = cur.take("ktf header")
    if len(tokens) != 5 or tokens[0] != "ktf":
        raise ParseError(lineno, f"expected 'ktf 1 <n> <k> <count>', got {' '.join(tokens)!r}")
    if tokens[1] != "1":
        raise ParseError(lineno, f"unsupported ktf version {tokens[1]!r}")
    n, k, count = _ints(lineno, tokens[2:], "ktf header")
    if count < 0:
        raise ParseError(lineno, f"tube count must be nonnegative, got {count}")
    try:
        res = Resolution(k, n)
    except ValueError as exc:
        raise ParseError(lineno, str(exc)) from None

    tubes: list[Tube] = []
    shadings: list[CellSet] = []
    for i in range(count):
        if cur.done():
            raise ParseError(cur.end_line, f"expected {count} tubes, found {i}")
        lineno, tokens = cur.take("line record")
        if tokens[0] != "line":
            raise ParseError(lineno, f"expected a line record, got {tokens[0]!r}")
        if len(tokens) != 2 * n:
            raise ParseError(lineno, f"line record needs {2 * n - 1} numbers, got {len(tokens) - 1}")
        coords = _floats(lineno, tokens[1:], "line record")
        try:
            tube = Tube(LineL(tuple(coords[: n - 1]), tuple(coords[n - 1 :])), res)
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
        hdr_lineno, hdr_tokens = cur.take("kgs shading block")
        block_res = _parse_kgs_header(hdr_lineno, hdr_tokens)
        if block_res != res:
            raise ParseError(hdr_lineno, f"shading grid {block_res} differs from family {res}")
        shading = _parse_cells(cur, res, stop_at_line_record=True)
        if not shading.issubset(rasterize(tube)):
            raise ParseError(hdr_lineno, f"tube {i} shading leaves its tube")
        tubes.append(tube)
        shadings.append(shading)
    if not cur.done():
        lineno, _ = cur.peek()
        raise ParseError(lineno, f"trailing content after {count} tubes")
    return TubeFamily(res, tuple(tubes), tuple(shadings))


# -- KHG ---------------------------------------------------------------------------


def write_khg(H: KPartiteHypergraph) -> str:
    lines = [f"khg 1 {H.k}", " ".join(str(s) for s in H.part_sizes)]
    lines.extend(" ".join(str(v) for v in row) for row in H.edges.tolist())
    return "\n".join(lines) + "\n"


def read_khg(text: str) -> KPartiteHypergraph:
    cur = _Cursor(text)
    lineno, tokens = cur.take("khg header")
    if len(tokens) != 3 or tokens[0] != "khg":
        raise ParseError(lineno, f"expected 'khg 1 <k>', got {' '.join(tokens)!r}")
    if tokens[1] != "1":
        raise ParseError(lineno, f"unsupported khg version {tokens[1]!r}")
    (k,) = _ints(lineno, tokens[2:], "khg header")
    if k < 1:
        raise ParseError(lineno, f"need at least one part, got k = {k}")

    lineno, tokens = cur.take("part sizes")
    if len(tokens) != k:
        raise ParseError(lineno, f"expected {k} part sizes, got {len(tokens)}")
    sizes = _ints(lineno, tokens, "part sizes")
    if any(s <= 0 for s in sizes):
        raise ParseError(lineno, f"part sizes must be positive, got {sizes}")

    rows: list[list[int]] = []
    seen: set[tuple[int, ...]] = set()
    while not cur.done():
        lineno, tokens = cur.take("edge")
        if len(tokens) != k:
            raise ParseError(lineno, f"expected {k} vertex indices, got {len(tokens)}")
        edge = _ints(lineno, tokens, "edge")
        for j, (v, s) in enumerate(zip(edge, sizes)):
            if not 0 <= v < s:
                raise ParseError(
                    lineno, f"edge ({', '.join(tokens)}): component {v} outside part {j} of size {s}"
                )
        key = tuple(edge)
        if key in seen:
            raise ParseError(lineno, f"duplicate edge ({', '.join(tokens)})")
        seen.add(key)
        rows.append(edge)
    edges = np.array(rows, dtype=np.int64).reshape(-1, k)
    return KPartiteHypergraph(tuple(sizes), edges)


# -- CSV tables ----------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class Table:
    """Numeric table: named columns, one tuple of floats per row."""

    header: tuple[str, ...]
    rows: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        header = tuple(str(h) for h in self.header)
        if not header or any(not h or "," in h or "\n" in h for h in header):
            raise ValueError(f"column names must be nonempty and comma-free, got {header}")
        rows = tuple(tuple(float(x) for x in row) for row in self.rows)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row width {len(row)} does not match {len(header)} columns")
        object.__setattr__(self, "header", header)
        object.__setattr__(self, "rows", rows)


def write_table(t: Table) -> str:
    lines = [",".join(t.header)]
    lines.extend(",".join(fmt_float(x) for x in row) for row in t.rows)
    return "\n".join(lines) + "\n"


def read_table(text: str) -> Table:
    content = [
        (i, line)
        for i, line in enumerate(text.splitlines(), start=1)
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if not content:
        raise ParseError(1, "missing header row")
    hdr_lineno, hdr_line = content[0]
    header = tuple(h.strip() for h in hdr_line.split(","))
    if any(not h for h in header):
        raise ParseError(hdr_lineno, f"empty column name in header {hdr_line!r}")
    rows = []
    for lineno, line in content[1:]:
        cells = line.split(",")
        if len(cells) != len(header):
            raise ParseError(lineno, f"expected {len(header)} values, got {len(cells)}")
        rows.append(tuple(_floats(lineno, cells, "value")))
    return Table(header, tuple(rows))


# -- conversion ----------------------------------------------------------------------

_CODECS = {
    "kgs": (read_kgs, write_kgs),
    "ktf": (read_ktf, write_ktf),
    "khg": (read_khg, write_khg),
    "csv": (read_table, write_table),
}


def convert(path, from_format: str, to_format: str, out_path) -> Path:
    """Re-serialize a file through its in-memory object; identity on canonical files.

    Only same-format round-trips are supported: every cross-format mapping
    would drop information, which the lossless contract forbids.
    """
    for name in (from_format, to_format):
        if name not in _CODECS:
            raise ValueError(f"unknown format {name!r}, expected one of {sorted(_CODECS)}")
    if from_format != to_format:
        raise ValueError(
            f"conversion {from_format!r} -> {to_format!r} would lose information; "
            "only same-format round-trips are supported"
        )
    reader, writer = _CODECS[from_format]
    out = Path(out_path)
    out.write_text(writer(reader(Path(path).read_text())), encoding="utf-8", newline="\n")
    return out

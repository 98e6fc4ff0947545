"""Pipe-delimited table text: parsing, rendering, and subtable checking."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import combinations

from tabreason.model import Table

_WS = re.compile(r"\s+")


class EmptyTableError(ValueError):
    """Raised when table text contains no non-blank line."""


def normalize_cell(cell: str) -> str:
    """Whitespace-collapsed, stripped cell text used for all comparisons."""
    return _WS.sub(" ", cell).strip()


def parse_table(text: str) -> Table:
    """Parse pipe-delimited text, one row per line, into a Table.

    Cells are trimmed. Ragged rows are padded with empty cells to the
    widest row and noted in ``padded_rows``.
    """
    # A line is a row if it has any content or an explicit cell separator;
    # a multi-column row of empty cells still renders as " | ".
    lines = [line for line in text.splitlines() if line.strip() or "|" in line]
    if not lines:
        raise EmptyTableError("table text has no non-blank line")
    raw_rows = [[cell.strip() for cell in line.split("|")] for line in lines]
    width = max(len(row) for row in raw_rows)
    padded: list[int] = []
    rows: list[tuple[str, ...]] = []
    for i, row in enumerate(raw_rows):
        if len(row) < width:
            padded.append(i)
            row = row + [""] * (width - len(row))
        rows.append(tuple(row))
    return Table(rows=tuple(rows), padded_rows=tuple(padded))


def table_from_rows(rows: list[list[str]]) -> Table:
    """Build a Table from a row matrix as shipped by JSON dataset files.

    Cells are stringified and sanitized the same way rendering does, so
    render_table(table_from_rows(r)) re-parses to the identical table.
    """
    if not rows:
        raise EmptyTableError("table has no rows")
    cleaned = [[_sanitize(_WS.sub(" ", str(cell))) for cell in row] for row in rows]
    width = max(len(row) for row in cleaned)
    if width == 0:
        raise EmptyTableError("table rows have no cells")
    padded: list[int] = []
    out: list[tuple[str, ...]] = []
    for i, row in enumerate(cleaned):
        if len(row) < width:
            padded.append(i)
            row = row + [""] * (width - len(row))
        out.append(tuple(row))
    return Table(rows=tuple(out), padded_rows=tuple(padded))


def render_table(table: Table) -> str:
    """Render rows as " | "-joined lines.

    Cell text is sanitized so the result re-parses to the same cells:
    pipes become slashes, newlines become spaces.
    """
    return "\n".join(
        " | ".join(_sanitize(cell) for cell in row) for row in table.rows
    )


def _sanitize(cell: str) -> str:
    return cell.replace("|", "/").replace("\n", " ").strip()


@dataclass(frozen=True, slots=True)
class SubtableReport:
    """Outcome of check_subtable.

    ``matched_row_indices``/``matched_col_indices`` map simplified rows and
    columns to original positions when matching succeeded (possibly partially
    on failure). ``mismatched_cells`` lists (row, col, got, expected) diffs
    from the best near-miss alignment, for diagnostics.
    """

    is_subtable: bool
    matched_row_indices: tuple[int, ...] = ()
    matched_col_indices: tuple[int, ...] = ()
    mismatched_cells: tuple[tuple[int, int, str, str], ...] = field(default=())


def check_subtable(simplified: Table, original: Table) -> SubtableReport:
    """Check that ``simplified`` selects rows/columns of ``original``.

    A valid subtable maps simplified rows and columns injectively and
    order-preservingly onto original rows and columns, with cell equality
    after whitespace collapsing. The check is diagnostic: callers record
    the report, a failure does not abort anything.
    """
    if simplified.is_empty or original.is_empty:
        return SubtableReport(is_subtable=False)
    simp = [[normalize_cell(c) for c in row] for row in simplified.rows]
    orig = [[normalize_cell(c) for c in row] for row in original.rows]
    n_cols_s, n_cols_o = len(simp[0]), len(orig[0])
    if n_cols_s > n_cols_o or len(simp) > len(orig):
        return SubtableReport(is_subtable=False)

    for col_map in _column_candidates(n_cols_s, n_cols_o):
        row_map = _match_rows(simp, orig, col_map)
        if row_map is not None:
            return SubtableReport(
                is_subtable=True,
                matched_row_indices=tuple(row_map),
                matched_col_indices=col_map,
            )
    return _near_miss_report(simp, orig)


def _column_candidates(k: int, n: int):
    """Increasing k-of-n column selections, identity-like ones first."""
    if k == n:
        yield tuple(range(n))
        return
    # Cheap guard: combinations(n, k) stays small for real tables, but a
    # degenerate wide table could blow up; cap the search.
    cap = 200_000
    count = 0
    for combo in combinations(range(n), k):
        yield combo
        count += 1
        if count >= cap:
            return


def _match_rows(
    simp: list[list[str]], orig: list[list[str]], col_map: tuple[int, ...]
) -> list[int] | None:
    """Greedy order-preserving row matching under a fixed column map."""
    matches: list[int] = []
    start = 0
    for s_row in simp:
        for i in range(start, len(orig)):
            if all(orig[i][c] == s_row[j] for j, c in enumerate(col_map)):
                matches.append(i)
                start = i + 1
                break
        else:
            return None
    return matches


def _near_miss_report(simp: list[list[str]], orig: list[list[str]]) -> SubtableReport:
    """Best-effort diagnostics when no exact mapping exists.

    Aligns rows greedily under a single column map (identity when widths
    match, first-k columns otherwise), tolerating mismatches, and reports
    the differing cells against each row's closest original candidate.
    """
    col_map = tuple(range(len(simp[0])))
    rows: list[int] = []
    diffs: list[tuple[int, int, str, str]] = []
    start = 0
    for r, s_row in enumerate(simp):
        scored = []
        for i in range(start, len(orig)):
            wrong = [
                (r, j, s_row[j], orig[i][c])
                for j, c in enumerate(col_map)
                if orig[i][c] != s_row[j]
            ]
            scored.append((len(wrong), i, wrong))
        if not scored:
            break
        _, i, wrong = min(scored, key=lambda t: (t[0], t[1]))
        rows.append(i)
        diffs.extend(wrong)
        start = i + 1
    return SubtableReport(
        is_subtable=False,
        matched_row_indices=tuple(rows),
        matched_col_indices=col_map,
        mismatched_cells=tuple(diffs),
    )

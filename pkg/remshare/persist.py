"""
Bit-exact persistence.

Every artifact is written atomically (temporary file in the
target directory, then a rename), and every number is written
with 17 significant digits, which round-trips doubles exactly.
"""

import csv
import io
import json
import os
import tempfile
from typing import Any, Iterable, List, Sequence

FORMATS = ("csv", "json")


def format_number(value: Any) -> str:
    """Formats a number for persistence.

        >>> format_number(0.1)
        '0.10000000000000001'
        >>> format_number(3)
        '3'
        >>> float(format_number(1 / 3)) == 1 / 3
        True

    Arguments:
        value {Any} -- An int, float or anything else (passed through str).

    Returns:
        str -- The formatted value.
    """

    if isinstance(value, bool):
        return "true" if value else "false"

    if isinstance(value, int):
        return str(value)

    if isinstance(value, float):
        return "{:.17g}".format(value)

    return str(value)


def write_atomic(path: str, text: str):
    """Writes text to path atomically (temp file + rename).

    Arguments:
        path {str} -- The destination path.
        text {str} -- The full contents.
    """

    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)

    handle, tmp_path = tempfile.mkstemp(
        dir=directory, prefix=".{}.".format(os.path.basename(path)), suffix=".tmp"
    )

    try:
        with os.fdopen(handle, "w", newline="") as tmp:
            tmp.write(text)

        os.replace(tmp_path, path)

    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)

        raise


def table_text(header: Sequence[str], rows: Iterable[Sequence[Any]], fmt: str = "csv") -> str:
    """Renders a table as CSV or as a JSON array of row objects.

        >>> print(table_text(["time", "z"], [[0.0, 1], [0.5, 2]]), end="")
        time,z
        0,1
        0.5,2

    Arguments:
        header {Sequence[str]} -- Column names.
        rows {Iterable[Sequence[Any]]} -- Row values.

    Keyword Arguments:
        fmt {str} -- Either 'csv' or 'json'. (default: {'csv'})

    Returns:
        str -- The rendered table.
    """

    if fmt == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(header)

        for row in rows:
            writer.writerow([format_number(value) for value in row])

        return out.getvalue()

    if fmt == "json":
        # json writes floats with repr(), which round-trips as well
        records = [dict(zip(header, row)) for row in rows]
        return json.dumps(records, indent=1) + "\n"

    raise ValueError("Unknown table format {!r}; expected one of {}".format(fmt, FORMATS))


def write_table(
    path_base: str, header: Sequence[str], rows: Iterable[Sequence[Any]], fmt: str = "csv"
) -> str:
    """Writes a table next to path_base with the extension of its format.

    Returns:
        str -- The path actually written.
    """

    path = "{}.{}".format(path_base, fmt)
    write_atomic(path, table_text(header, rows, fmt))
    return path


def write_json(path: str, payload: Any):
    """Writes a JSON document atomically, with sorted keys."""

    write_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_table(text: str) -> List[dict]:
    """Parses CSV text with a header into a list of row dicts (string values)."""

    return list(csv.DictReader(io.StringIO(text)))

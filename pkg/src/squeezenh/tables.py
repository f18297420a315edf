"""Bit-stable tabular output: versioned CSV/JSON with provenance.

Files are deterministic functions of the experiment config: no timestamps,
floats serialized with 17 significant digits (exact double round-trip),
keys sorted. Rerunning a config must reproduce files byte for byte.
"""

from dataclasses import dataclass, field
import hashlib
import json
import math

from . import __version__ as _code_version


def config_hash(config):
    """12-hex digest of the canonical JSON form of a config mapping."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class OutputTable:
    """Versioned numeric table with provenance.

    extra holds (key, value) metadata lines (baselines, fits) that ride
    along as comments in CSV and a mapping in JSON. All row cells must be
    finite numbers; non-numeric info belongs in extra.
    """

    schema: str
    version: int
    columns: tuple
    units: tuple
    rows: tuple
    provenance: dict = field(default_factory=dict)
    extra: tuple = ()

    def __post_init__(self):
        if not self.schema:
            raise ValueError("schema name required")
        if len(self.units) != len(self.columns):
            raise ValueError("one unit per column required")
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row length differs from column count")
            for cell in row:
                if not math.isfinite(cell):
                    raise ValueError("table cells must be finite")

    def column(self, name):
        try:
            j = self.columns.index(name)
        except ValueError:
            raise KeyError(f"no column named {name!r}") from None
        return [row[j] for row in self.rows]


def _fmt(x):
    return f"{float(x):.17g}"


def write_csv(table, path):
    """Layout: schema comment, provenance comment, units comment, optional
    extra comments, header row, then one line per row."""
    lines = [f"# schema={table.schema}/{table.version}"]
    prov = " ".join(f"{k}={table.provenance[k]}" for k in sorted(table.provenance))
    lines.append(f"# provenance: {prov}" if prov else "# provenance:")
    units = ",".join(f"{c}={u}" for c, u in zip(table.columns, table.units))
    lines.append(f"# units: {units}")
    for k, v in table.extra:
        lines.append(f"# {k}={v}")
    lines.append(",".join(table.columns))
    for row in table.rows:
        lines.append(",".join(_fmt(x) for x in row))
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def write_json(table, path):
    doc = {
        "schema": table.schema,
        "version": table.version,
        "columns": list(table.columns),
        "units": list(table.units),
        "provenance": dict(table.provenance),
        "extra": {k: v for k, v in table.extra},
        "rows": [[float(x) for x in row] for row in table.rows],
    }
    with open(path, "w", newline="\n") as f:
        json.dump(doc, f, sort_keys=True, indent=1)
        f.write("\n")


def read_csv(path):
    """Inverse of write_csv; returns an OutputTable."""
    schema, version = "", 0
    provenance = {}
    units = ()
    extra = []
    columns = None
    rows = []
    with open(path) as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("schema="):
                    name = body[len("schema=") :]
                    schema, _, ver = name.partition("/")
                    version = int(ver or 0)
                elif body.startswith("provenance:"):
                    for kv in body[len("provenance:") :].split():
                        k, _, v = kv.partition("=")
                        provenance[k] = v
                elif body.startswith("units:"):
                    units = tuple(
                        kv.partition("=")[2] for kv in body[len("units:") :].strip().split(",") if kv
                    )
                else:
                    k, _, v = body.partition("=")
                    extra.append((k, v))
            elif columns is None:
                columns = tuple(line.split(","))
            else:
                rows.append(tuple(float(x) for x in line.split(",")))
    if columns is None:
        raise ValueError(f"{path}: no header row found")
    if not units:
        units = tuple("" for _ in columns)
    return OutputTable(
        schema, version, columns, units, tuple(rows), provenance, tuple(extra)
    )


def provenance_for(config):
    return {"config": config_hash(config), "code": _code_version}

"""Network case model: bus/branch records, admittance matrix, file readers.

Two on-disk formats are understood:

* ``json`` -- the canonical schema (see ``docs/case_schema.md`` in the source tree)::

    {"name": "...", "base_mva": 100.0,
     "buses": [{"id": 1, "kind": "Slack", "p_gen": 0.0, "p_load": 0.0,
                "q_gen": 0.0, "q_load": 0.0, "v_ref": 1.0,
                "v_min": null, "v_max": null, "g_sh": 0.0, "b_sh": 0.0}, ...],
     "branches": [{"from": 1, "to": 2, "r": 0.0, "x": 1.0, "b_sh": 0.0}, ...],
     "metadata": {}}

* ``matpower`` -- the ``mpc.baseMVA`` / ``mpc.bus`` / ``mpc.gen`` /
  ``mpc.branch`` subset of MATPOWER version-2 case files.

All electrical quantities are per-unit on ``base_mva``.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import (
    DegenerateBranchError,
    ParseError,
    UnsupportedFeature,
    ValidationError,
)

DEFAULT_VMIN = 0.9
DEFAULT_VMAX = 1.1

DATA_DIR = Path(__file__).parent / "data"


class BusKind(str, Enum):
    SLACK = "Slack"
    PV = "PV"
    PQ = "PQ"


class CaseFormat(str, Enum):
    JSON = "json"
    MATPOWER = "matpower"


@dataclass(frozen=True)
class BusRecord:
    id: int
    kind: BusKind
    p_gen: float = 0.0
    p_load: float = 0.0
    q_gen: float = 0.0
    q_load: float = 0.0
    v_ref: float | None = None
    v_min: float | None = None
    v_max: float | None = None
    g_sh: float = 0.0
    b_sh: float = 0.0

    @property
    def p_inj(self) -> float:
        return self.p_gen - self.p_load

    @property
    def q_inj(self) -> float:
        return self.q_gen - self.q_load


@dataclass(frozen=True)
class BranchRecord:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_sh: float = 0.0


@dataclass(frozen=True)
class AdmittanceMatrix:
    """Bus admittance matrix split into conductance ``G`` and susceptance ``B``."""

    n: int
    G: sp.csr_matrix
    B: sp.csr_matrix

    @property
    def Y(self) -> sp.csr_matrix:
        return (self.G + 1j * self.B).tocsr()


@dataclass(frozen=True, eq=False)
class NetworkCase:
    buses: tuple[BusRecord, ...]
    branches: tuple[BranchRecord, ...]
    ybus: AdmittanceMatrix
    base_mva: float = 100.0
    name: str = "case"
    metadata: Mapping = field(default_factory=lambda: MappingProxyType({}))

    def __post_init__(self):
        if self.ybus.n != len(self.buses):
            raise ValidationError("admittance matrix size does not match bus count")
        ids = {b.id for b in self.buses}
        for br in self.branches:
            if br.from_bus not in ids or br.to_bus not in ids:
                raise ValidationError(
                    f"branch {br.from_bus}-{br.to_bus} references a missing bus"
                )

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    def index_of(self, bus_id: int) -> int:
        """Dense 0-based index of the bus with external id ``bus_id``."""
        for k, b in enumerate(self.buses):
            if b.id == bus_id:
                return k
        raise KeyError(f"no bus with id {bus_id}")

    def bus(self, bus_id: int) -> BusRecord:
        return self.buses[self.index_of(bus_id)]

    @property
    def slack_index(self) -> int:
        return next(k for k, b in enumerate(self.buses) if b.kind is BusKind.SLACK)

    @property
    def pq_indices(self) -> list[int]:
        return [k for k, b in enumerate(self.buses) if b.kind is BusKind.PQ]

    @property
    def pv_indices(self) -> list[int]:
        return [k for k, b in enumerate(self.buses) if b.kind is BusKind.PV]

    def same_as(self, other: "NetworkCase") -> bool:
        """Field-for-field equality (bit-exact on floats)."""
        return (
            self.buses == other.buses
            and self.branches == other.branches
            and self.base_mva == other.base_mva
            and self.name == other.name
            and dict(self.metadata) == dict(other.metadata)
        )

    def with_voltage_limits(self, v_min: float, v_max: float) -> "NetworkCase":
        """Copy of the case with the same ``[v_min, v_max]`` on every PQ bus."""
        buses = [
            _replace(b, v_min=v_min, v_max=v_max) if b.kind is BusKind.PQ else b
            for b in self.buses
        ]
        meta = dict(self.metadata)
        meta["voltage_limits_override"] = [v_min, v_max]
        return make_case(buses, self.branches, self.base_mva, self.name, meta)


def _replace(bus: BusRecord, **kw) -> BusRecord:
    from dataclasses import replace

    return replace(bus, **kw)


# ---------------------------------------------------------------------------
# admittance matrix


def build_ybus(buses: Sequence[BusRecord], branches: Sequence[BranchRecord]) -> AdmittanceMatrix:
    """Assemble the pi-model bus admittance matrix.

    Off-diagonals get ``-y`` with ``y = 1/(r + jx)``; each diagonal collects
    ``y + j*b_sh/2`` from its incident branches plus the bus shunt.
    """
    n = len(buses)
    pos = {b.id: k for k, b in enumerate(buses)}
    rows, cols, vals = [], [], []
    for br in branches:
        if br.r == 0.0 and br.x == 0.0:
            raise DegenerateBranchError(
                f"branch {br.from_bus}-{br.to_bus} has zero impedance"
            )
        i, k = pos[br.from_bus], pos[br.to_bus]
        y = 1.0 / complex(br.r, br.x)
        ysh = 0.5j * br.b_sh
        rows += [i, k, i, k]
        cols += [k, i, i, k]
        vals += [-y, -y, y + ysh, y + ysh]
    for k, b in enumerate(buses):
        if b.g_sh or b.b_sh:
            rows.append(k)
            cols.append(k)
            vals.append(complex(b.g_sh, b.b_sh))
    Y = sp.coo_matrix(
        (np.asarray(vals, dtype=complex), (rows, cols)), shape=(n, n)
    ).tocsr()
    Y.sum_duplicates()
    return AdmittanceMatrix(n=n, G=sp.csr_matrix(Y.real), B=sp.csr_matrix(Y.imag))


# ---------------------------------------------------------------------------
# validation / construction


def validate(buses: Sequence[BusRecord], branches: Sequence[BranchRecord]) -> None:
    ids = [b.id for b in buses]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate bus ids")
    n_slack = sum(b.kind is BusKind.SLACK for b in buses)
    if n_slack != 1:
        raise ValidationError(f"expected exactly one Slack bus, found {n_slack}")
    for b in buses:
        if b.kind is BusKind.PQ:
            if b.v_min is None or b.v_max is None:
                raise ValidationError(f"PQ bus {b.id} is missing voltage limits")
            if not (0.0 < b.v_min < b.v_max):
                raise ValidationError(
                    f"PQ bus {b.id}: need 0 < v_min < v_max, got [{b.v_min}, {b.v_max}]"
                )
        else:
            if b.v_ref is None or not b.v_ref > 0.0:
                raise ValidationError(f"{b.kind.value} bus {b.id} needs v_ref > 0")
    known = set(ids)
    for br in branches:
        if br.from_bus not in known or br.to_bus not in known:
            raise ValidationError(
                f"branch {br.from_bus}-{br.to_bus} references a missing bus"
            )
        if br.from_bus == br.to_bus:
            raise ValidationError(f"branch {br.from_bus}-{br.to_bus} is a self loop")


def make_case(
    buses: Sequence[BusRecord],
    branches: Sequence[BranchRecord],
    base_mva: float = 100.0,
    name: str = "case",
    metadata: Mapping | None = None,
) -> NetworkCase:
    """Validate records and build an immutable :class:`NetworkCase`."""
    buses = tuple(sorted(buses, key=lambda b: b.id))
    branches = tuple(branches)
    validate(buses, branches)
    return NetworkCase(
        buses=buses,
        branches=branches,
        ybus=build_ybus(buses, branches),
        base_mva=float(base_mva),
        name=name,
        metadata=MappingProxyType(dict(metadata or {})),
    )


# ---------------------------------------------------------------------------
# JSON format

_BUS_FLOATS = ("p_gen", "p_load", "q_gen", "q_load", "g_sh", "b_sh")
_BUS_OPT = ("v_ref", "v_min", "v_max")


def _num(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"expected a number, got {value!r}", where)
    return float(value)


def _bus_from_json(d, k) -> BusRecord:
    where = f"buses[{k}]"
    if not isinstance(d, dict):
        raise ParseError("expected an object", where)
    try:
        bus_id = d["id"]
        kind = d["kind"]
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}", where) from None
    if isinstance(bus_id, bool) or not isinstance(bus_id, int):
        raise ParseError("id must be an integer", f"{where}.id")
    try:
        kind = BusKind(kind)
    except ValueError:
        raise ParseError(f"unknown bus kind {kind!r}", f"{where}.kind") from None
    kw = {}
    for f in _BUS_FLOATS:
        if f in d:
            kw[f] = _num(d[f], f"{where}.{f}")
    for f in _BUS_OPT:
        if d.get(f) is not None:
            kw[f] = _num(d[f], f"{where}.{f}")
    unknown = set(d) - {"id", "kind", *_BUS_FLOATS, *_BUS_OPT}
    if unknown:
        raise UnsupportedFeature(f"{where}: unsupported fields {sorted(unknown)}")
    return BusRecord(id=bus_id, kind=kind, **kw)


def _branch_from_json(d, k) -> BranchRecord:
    where = f"branches[{k}]"
    if not isinstance(d, dict):
        raise ParseError("expected an object", where)
    unknown = set(d) - {"from", "to", "r", "x", "b_sh"}
    if unknown:
        raise UnsupportedFeature(f"{where}: unsupported fields {sorted(unknown)}")
    try:
        f, t = d["from"], d["to"]
        r, x = d["r"], d["x"]
    except KeyError as exc:
        raise ParseError(f"missing field {exc.args[0]!r}", where) from None
    for key, v in (("from", f), ("to", t)):
        if isinstance(v, bool) or not isinstance(v, int):
            raise ParseError("bus reference must be an integer", f"{where}.{key}")
    return BranchRecord(
        from_bus=f,
        to_bus=t,
        r=_num(r, f"{where}.r"),
        x=_num(x, f"{where}.x"),
        b_sh=_num(d.get("b_sh", 0.0), f"{where}.b_sh"),
    )


def parse_json_case(text: str, name: str = "case") -> NetworkCase:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, f"line {exc.lineno} column {exc.colno}") from None
    if not isinstance(doc, dict):
        raise ParseError("top level must be an object", "line 1")
    for key in ("buses", "branches"):
        if not isinstance(doc.get(key), list):
            raise ParseError(f"missing or non-list field {key!r}", key)
    buses = [_bus_from_json(d, k) for k, d in enumerate(doc["buses"])]
    branches = [_branch_from_json(d, k) for k, d in enumerate(doc["branches"])]
    base = _num(doc.get("base_mva", 100.0), "base_mva")
    return make_case(buses, branches, base, doc.get("name", name), doc.get("metadata"))


def case_to_dict(case: NetworkCase) -> dict:
    buses = []
    for b in case.buses:
        d = {"id": b.id, "kind": b.kind.value}
        for f in _BUS_FLOATS:
            d[f] = getattr(b, f)
        for f in _BUS_OPT:
            d[f] = getattr(b, f)
        buses.append(d)
    branches = [
        {"from": br.from_bus, "to": br.to_bus, "r": br.r, "x": br.x, "b_sh": br.b_sh}
        for br in case.branches
    ]
    return {
        "name": case.name,
        "base_mva": case.base_mva,
        "buses": buses,
        "branches": branches,
        "metadata": dict(case.metadata),
    }


def dump_case(case: NetworkCase, path) -> None:
    """Write ``case`` in the JSON schema; floats round-trip bit-exactly."""
    Path(path).write_text(json.dumps(case_to_dict(case), indent=1) + "\n")


# ---------------------------------------------------------------------------
# MATPOWER subset

_MAT_RE = re.compile(r"mpc\.(\w+)\s*=\s*\[(.*?)\]\s*;?", re.S)
_SCALAR_RE = re.compile(r"mpc\.(\w+)\s*=\s*([^\[\];]+);")
_IGNORED_BLOCKS = {"gencost", "bus_name"}
_KNOWN_BLOCKS = {"bus", "gen", "branch"}


def _strip_comments(text: str) -> str:
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _parse_matrix(body: str, block: str, first_line: int) -> np.ndarray:
    rows = []
    line_no = first_line
    for raw_line in body.split("\n"):
        for chunk in raw_line.split(";"):
            toks = chunk.replace(",", " ").split()
            if not toks:
                continue
            try:
                rows.append([float(t) for t in toks])
            except ValueError:
                raise ParseError(
                    f"non-numeric entry in mpc.{block}", f"line {line_no}"
                ) from None
        line_no += 1
    if not rows:
        return np.zeros((0, 0))
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ParseError(f"ragged rows in mpc.{block}", f"line {first_line}")
    return np.array(rows)


def parse_matpower_case(
    text: str,
    name: str = "case",
    neutralize_transformers: bool = False,
) -> NetworkCase:
    """Read the bus/gen/branch subset of a MATPOWER case.

    Off-nominal tap ratios and phase shifts raise :class:`UnsupportedFeature`
    unless ``neutralize_transformers`` is set, in which case they are reset
    to 1.0 / 0 and the affected branches are listed in the case metadata.
    """
    clean = _strip_comments(text)
    blocks = {}
    for m in _MAT_RE.finditer(clean):
        key = m.group(1)
        first_line = clean.count("\n", 0, m.start(2)) + 1
        if key in _IGNORED_BLOCKS:
            continue
        if key not in _KNOWN_BLOCKS:
            raise UnsupportedFeature(f"mpc.{key} is outside the supported subset")
        blocks[key] = _parse_matrix(m.group(2), key, first_line)
    scalars = {m.group(1): m.group(2).strip() for m in _SCALAR_RE.finditer(clean)}
    for key in ("bus", "gen", "branch"):
        if key not in blocks:
            raise ParseError(f"missing mpc.{key} matrix", "file")
    try:
        base = float(scalars.get("baseMVA", "100"))
    except ValueError:
        raise ParseError("baseMVA is not a number", "mpc.baseMVA") from None

    bus, gen, branch = blocks["bus"], blocks["gen"], blocks["branch"]
    if bus.shape[1] < 11 or gen.shape[1] < 8 or branch.shape[1] < 5:
        raise ParseError("too few columns in bus/gen/branch", "file")
    meta: dict = {"source_format": "matpower"}

    has_limits = bus.shape[1] >= 13
    if not has_limits:
        meta["default_voltage_limits"] = [DEFAULT_VMIN, DEFAULT_VMAX]

    pg = {}
    qg = {}
    vg = {}
    for row in gen:
        if row[7] <= 0:
            continue
        b = int(row[0])
        pg[b] = pg.get(b, 0.0) + row[1] / base
        qg[b] = qg.get(b, 0.0) + row[2] / base
        vg.setdefault(b, float(row[5]))

    kinds = {1: BusKind.PQ, 2: BusKind.PV, 3: BusKind.SLACK}
    buses = []
    for row in bus:
        bid, btype = int(row[0]), int(row[1])
        if btype not in kinds:
            raise UnsupportedFeature(f"bus {bid}: bus type {btype} is not supported")
        kind = kinds[btype]
        if kind is not BusKind.PQ and bid not in vg:
            kind = BusKind.PQ  # generator bus with no in-service generator
        rec = dict(
            id=bid,
            kind=kind,
            p_gen=pg.get(bid, 0.0),
            p_load=row[2] / base,
            q_gen=qg.get(bid, 0.0),
            q_load=row[3] / base,
            g_sh=row[4] / base,
            b_sh=row[5] / base,
        )
        if kind is BusKind.PQ:
            if has_limits:
                rec["v_min"], rec["v_max"] = float(row[12]), float(row[11])
            else:
                rec["v_min"], rec["v_max"] = DEFAULT_VMIN, DEFAULT_VMAX
        else:
            rec["v_ref"] = vg[bid]
        buses.append(BusRecord(**rec))

    branches = []
    neutralized = []
    for k, row in enumerate(branch):
        if branch.shape[1] > 10 and row[10] <= 0:
            continue  # out of service
        ratio = row[8] if branch.shape[1] > 8 else 0.0
        shift = row[9] if branch.shape[1] > 9 else 0.0
        if (ratio not in (0.0, 1.0)) or shift != 0.0:
            if not neutralize_transformers:
                raise UnsupportedFeature(
                    f"branch {k + 1} ({int(row[0])}-{int(row[1])}): tap ratio "
                    f"{ratio} / phase shift {shift} not supported"
                )
            neutralized.append(k + 1)
        branches.append(
            BranchRecord(int(row[0]), int(row[1]), float(row[2]), float(row[3]), float(row[4]))
        )
    if neutralized:
        meta["neutralized_transformer_branches"] = neutralized
    return make_case(buses, branches, base, name, meta)


# ---------------------------------------------------------------------------
# entry points


def load_case(
    path,
    format: CaseFormat | str | None = None,
    *,
    vlimits: tuple[float, float] | None = None,
    neutralize_transformers: bool = False,
) -> NetworkCase:
    """Load and validate a case file.

    ``format`` defaults to the file extension (``.json`` or ``.m``).
    ``vlimits`` overrides the voltage limits of every PQ bus.
    """
    path = Path(path)
    if format is None:
        format = CaseFormat.MATPOWER if path.suffix == ".m" else CaseFormat.JSON
    format = CaseFormat(format)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(str(exc.strerror or exc), str(path)) from None
    if format is CaseFormat.JSON:
        case = parse_json_case(text, name=path.stem)
    else:
        case = parse_matpower_case(
            text, name=path.stem, neutralize_transformers=neutralize_transformers
        )
    if vlimits is not None:
        case = case.with_voltage_limits(*vlimits)
    return case


def builtin_case(name: str, **kw) -> NetworkCase:
    """Load one of the bundled cases: ``case3``, ``case9``, ``case14``, ``case300``."""
    for suffix in (".json", ".m"):
        p = DATA_DIR / f"{name}{suffix}"
        if p.exists():
            return load_case(p, **kw)
    raise KeyError(f"no bundled case named {name!r}")


def three_bus_case(
    x: float = 1.0, v_min: float = 0.9, v_max: float = 1.1
) -> NetworkCase:
    """Lossless triangle: slack bus 1, PV bus 2, PQ bus 3, all lines reactance ``x``."""
    buses = [
        BusRecord(1, BusKind.SLACK, v_ref=1.0),
        BusRecord(2, BusKind.PV, v_ref=1.0),
        BusRecord(3, BusKind.PQ, v_min=v_min, v_max=v_max),
    ]
    branches = [BranchRecord(1, 2, 0.0, x), BranchRecord(1, 3, 0.0, x), BranchRecord(2, 3, 0.0, x)]
    return make_case(buses, branches, 100.0, "case3")


def is_lossless(case: NetworkCase) -> bool:
    return all(br.r == 0.0 for br in case.branches) and all(
        b.g_sh == 0.0 for b in case.buses
    )


__all__ = [
    "BusKind",
    "CaseFormat",
    "BusRecord",
    "BranchRecord",
    "AdmittanceMatrix",
    "NetworkCase",
    "build_ybus",
    "make_case",
    "load_case",
    "dump_case",
    "case_to_dict",
    "parse_json_case",
    "parse_matpower_case",
    "builtin_case",
    "three_bus_case",
    "is_lossless",
]

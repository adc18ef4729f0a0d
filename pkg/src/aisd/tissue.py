"""The tissue compartment: antigen store, signal array and a cycling cell
population.

The compartment is generic machinery: it knows nothing about what cells do.
Algorithms register a cycle callback per cell type; each cycle runs every
cell's callback exactly once in a seeded-random order, so repeated runs with
the same seed and the same scripted inputs are bit-identical.

External writers (wire sessions) may add antigen and set signals
concurrently with a cycling thread; individual writes are atomic and become
visible no later than the start of the next cycle.
"""
from __future__ import annotations

import csv
import enum
import io
import logging
import random
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from .trace_model import DEFAULT_TABLE, Label, SyscallTable

logger = logging.getLogger(__name__)


class ReceptorKind(str, enum.Enum):
    ANTIGEN = "antigen"
    CYTOKINE = "cytokine"
    CELL = "cell"
    VR = "vr"


class ProducerKind(str, enum.Enum):
    ANTIGEN = "antigen"
    RESPONSE = "response"


@dataclass
class Receptor:
    kind: ReceptorKind
    lock: int | None = None          # vr kind: the value it matches
    target_signal: str | None = None  # cytokine kind: which signal it reads


@dataclass
class Producer:
    kind: ProducerKind
    key: int | None = None
    presentation_remaining: int = 0


@dataclass
class Cell:
    id: int
    cell_type: int
    receptors: list[Receptor] = field(default_factory=list)
    producers: list[Producer] = field(default_factory=list)
    cytokines: list[int] = field(default_factory=list)
    age_cycles: int = 0


@dataclass(frozen=True)
class ResponseRecord:
    cycle: int
    wall_time: float
    cell_id: int
    matched_value: int


@dataclass(frozen=True)
class CycleReport:
    antigen_consumed: int
    responses_emitted: int


@dataclass(frozen=True)
class TissueParams:
    """Environment parameters; everything else is per-algorithm."""

    signals: tuple[str, ...] = ("cpu",)
    antigen_capacity: int = 10_000
    cycles_per_second: float = 10.0

    def __post_init__(self) -> None:
        if not self.signals:
            raise ValueError("at least one signal name is required")
        if self.antigen_capacity < 1:
            raise ValueError("antigen_capacity must be >= 1")
        if self.cycles_per_second <= 0:
            raise ValueError("cycles_per_second must be positive")


CycleCallback = Callable[[Cell, "Compartment"], None]
CellFactory = Callable[[int, random.Random], Cell]


class Compartment:
    """Shared environment: antigen multiset, signal levels, cell population."""

    def __init__(self, params: TissueParams, seed: int):
        self.params = params
        self.seed = seed
        self.rng = random.Random(seed)
        self.cycle_count = 0
        self.response_log: list[ResponseRecord] = []
        self.antigen_added_total = 0
        self.signals_set_total = 0
        self._store: list[tuple[int, Label]] = []
        self._signals: dict[str, float] = {name: 0.0 for name in params.signals}
        self._cells: list[Cell] = []
        self._cells_by_type: dict[int, list[Cell]] = {}
        self._callbacks: dict[int, CycleCallback] = {}
        self._response_listeners: list[Callable[[ResponseRecord], None]] = []
        self._next_cell_id = 0
        self._lock = threading.RLock()
        self._realtime_start: float | None = None
        self._consumed = 0
        self._emitted = 0

    # -- clock ------------------------------------------------------------

    def start_realtime_clock(self) -> None:
        """Switch wall_time from the logical cycle clock to monotonic time."""
        self._realtime_start = time.monotonic()

    def wall_time(self) -> float:
        if self._realtime_start is not None:
            return time.monotonic() - self._realtime_start
        return self.cycle_count / self.params.cycles_per_second

    # -- external inputs ---------------------------------------------------

    def add_antigen(self, value: int, label: Label = Label.NORMAL) -> None:
        if value < 0:
            raise ValueError(f"antigen value must be >= 0, got {value}")
        with self._lock:
            if len(self._store) >= self.params.antigen_capacity:
                del self._store[0]  # bounded store: overflow drops oldest
            self._store.append((value, Label(label)))
            self.antigen_added_total += 1

    def set_signal(self, name: str, level: float) -> None:
        if name not in self._signals:
            raise ValueError(f"unknown signal {name!r}")
        if level < 0.0 or level > 1.0:
            logger.warning("signal %s level %s outside [0, 1], clamped", name, level)
            level = min(1.0, max(0.0, level))
        with self._lock:
            self._signals[name] = level
            self.signals_set_total += 1

    def get_signal(self, name: str) -> float:
        return self._signals[name]

    def antigen_count(self) -> int:
        return len(self._store)

    # -- population --------------------------------------------------------

    def register_callback(self, cell_type: int, callback: CycleCallback) -> None:
        self._callbacks[cell_type] = callback

    def populate(self, cell_factory: CellFactory, count_per_type: Mapping[int, int]) -> None:
        """Create and add cells; ids are unique across populate calls."""
        with self._lock:
            for cell_type, count in count_per_type.items():
                if count < 0:
                    raise ValueError(f"cell count for type {cell_type} must be >= 0")
                for _ in range(count):
                    cell = cell_factory(cell_type, self.rng)
                    cell.id = self._next_cell_id
                    self._next_cell_id += 1
                    self._cells.append(cell)
                    self._cells_by_type.setdefault(cell.cell_type, []).append(cell)

    @property
    def cells(self) -> list[Cell]:
        return list(self._cells)

    def cells_of_type(self, cell_type: int) -> list[Cell]:
        return self._cells_by_type.get(cell_type, [])

    # -- cycle-internal operations (called from cell callbacks) ------------

    def draw_antigen(self) -> tuple[int, Label] | None:
        """Remove and return one antigen chosen uniformly at random."""
        if not self._store:
            return None
        idx = self.rng.randrange(len(self._store))
        item = self._store.pop(idx)
        self._consumed += 1
        return item

    def emit_response(self, cell: Cell, matched_value: int) -> None:
        record = ResponseRecord(self.cycle_count, self.wall_time(), cell.id, matched_value)
        self.response_log.append(record)
        self._emitted += 1
        for listener in self._response_listeners:
            listener(record)

    def add_response_listener(self, listener: Callable[[ResponseRecord], None]) -> None:
        self._response_listeners.append(listener)

    def remove_response_listener(self, listener: Callable[[ResponseRecord], None]) -> None:
        if listener in self._response_listeners:
            self._response_listeners.remove(listener)

    # -- the cycle ----------------------------------------------------------

    def cycle(self) -> CycleReport:
        """Run every cell's callback once, in a freshly shuffled order."""
        with self._lock:
            self.cycle_count += 1
            self._consumed = 0
            self._emitted = 0
            order = list(self._cells)
            self.rng.shuffle(order)
            for cell in order:
                callback = self._callbacks.get(cell.cell_type)
                if callback is None:
                    raise RuntimeError(
                        f"no cycle callback registered for cell type {cell.cell_type}"
                    )
                callback(cell, self)
            return CycleReport(self._consumed, self._emitted)


def create_compartment(params: TissueParams | None = None, seed: int = 0) -> Compartment:
    """Fresh compartment: empty store, zeroed signals, empty population."""
    return Compartment(params or TissueParams(), seed)


# ---------------------------------------------------------------------------
# key = value parameter files
# ---------------------------------------------------------------------------

def parse_kv_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines; # comments and blank lines ignored."""
    result: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        result[key.strip()] = value.strip()
    return result


def tissue_params_from_kv(kv: Mapping[str, str]) -> TissueParams:
    defaults = TissueParams()
    signals = tuple(
        s.strip() for s in kv.get("signals", ",".join(defaults.signals)).split(",") if s.strip()
    )
    return TissueParams(
        signals=signals,
        antigen_capacity=int(kv.get("antigen_capacity", defaults.antigen_capacity)),
        cycles_per_second=float(kv.get("cycles_per_second", defaults.cycles_per_second)),
    )


# ---------------------------------------------------------------------------
# Response log output
# ---------------------------------------------------------------------------

def format_response_csv(
    records: list[ResponseRecord], table: SyscallTable | None = None
) -> str:
    table = table or DEFAULT_TABLE
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["cycle", "wall_time", "cell_id", "syscall_number", "syscall_name"])
    for rec in records:
        writer.writerow(
            [rec.cycle, f"{rec.wall_time:.3f}", rec.cell_id, rec.matched_value,
             table.name(rec.matched_value)]
        )
    return out.getvalue()


def write_response_csv(
    records: list[ResponseRecord], path: str | Path, table: SyscallTable | None = None
) -> None:
    Path(path).write_text(format_response_csv(records, table), encoding="utf-8")

"""The two-cell-type detector.

Type 1 cells ingest antigen from the compartment store and present it on
antigen producers for a CPU-dependent number of cycles.  Type 2 cells bind
Type 1 cells, compare their VR receptor locks against presented keys, and
emit a response for every exact match; a Type 2 cell that has never matched
re-randomizes all its locks once it outlives ``cell_lifespan`` cycles.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, replace
from typing import Mapping

from .tissue import (
    Cell,
    Compartment,
    Producer,
    ProducerKind,
    Receptor,
    ReceptorKind,
)
from .trace_model import SYSCALL_RANGE

TYPE1 = 1
TYPE2 = 2


@dataclass(frozen=True)
class TwocellParams:
    n_type1: int = 10
    n_type2: int = 20
    antigen_receptors_per_t1: int = 2
    antigen_producers_per_t1: int = 3
    vr_receptors_per_t2: int = 4
    cell_receptors_per_t2: int = 3
    cell_lifespan: int = 100
    min_presentation: int = 5
    max_presentation: int = 50
    bind_attempts_per_cycle: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        counts = (
            self.n_type1, self.n_type2,
            self.antigen_receptors_per_t1, self.antigen_producers_per_t1,
            self.vr_receptors_per_t2, self.cell_receptors_per_t2,
            self.cell_lifespan, self.min_presentation, self.max_presentation,
            self.bind_attempts_per_cycle,
        )
        if any(c < 1 for c in counts):
            raise ValueError("all twocell counts must be >= 1")
        if self.min_presentation > self.max_presentation:
            raise ValueError("min_presentation must be <= max_presentation")


def params_from_kv(kv: Mapping[str, str], prefix: str = "twocell.") -> TwocellParams:
    """Build params from a key = value mapping, honoring the given prefix."""
    defaults = TwocellParams()
    kwargs = {}
    for name in defaults.__dataclass_fields__:
        key = prefix + name
        if key in kv:
            kwargs[name] = int(kv[key])
    return replace(defaults, **kwargs)


def presentation_period(cpu_level: float, params: TwocellParams) -> int:
    """Cycles an antigen stays presented: linear in the CPU signal."""
    cpu_level = min(1.0, max(0.0, cpu_level))
    span = params.max_presentation - params.min_presentation
    return round(params.min_presentation + cpu_level * span)


def _cell_views(cell: Cell):
    # cached per-cell views; receptor/producer objects never change identity
    try:
        return cell._views  # type: ignore[attr-defined]
    except AttributeError:
        views = {
            "antigen_receptors": [r for r in cell.receptors if r.kind is ReceptorKind.ANTIGEN],
            "cytokine": next(
                (r for r in cell.receptors if r.kind is ReceptorKind.CYTOKINE), None
            ),
            "cell_receptors": [r for r in cell.receptors if r.kind is ReceptorKind.CELL],
            "vr": [r for r in cell.receptors if r.kind is ReceptorKind.VR],
            "antigen_producers": [p for p in cell.producers if p.kind is ProducerKind.ANTIGEN],
        }
        cell._views = views  # type: ignore[attr-defined]
        return views


def type1_cycle(cell: Cell, compartment: Compartment, params: TwocellParams) -> None:
    """Expire old presentations, then ingest and present fresh antigen.

    Expiry runs first so a fresh presentation survives exactly its full
    period, and a slot freed this cycle is immediately reusable.  Ingestion
    is pass-through: a receptor only draws when a free producer exists, so
    the store shrinks by exactly the number of new presentations.
    """
    views = _cell_views(cell)
    producers = views["antigen_producers"]

    for producer in producers:
        if producer.presentation_remaining > 0:
            producer.presentation_remaining -= 1
            if producer.presentation_remaining == 0:
                producer.key = None  # presented antigen destroyed

    free = [p for p in producers if p.key is None]
    if not free:
        return
    cytokine = views["cytokine"]
    cpu = compartment.get_signal(cytokine.target_signal) if cytokine else 0.0
    period = presentation_period(cpu, params)
    for producer in free[: len(views["antigen_receptors"])]:
        drawn = compartment.draw_antigen()
        if drawn is None:
            break
        producer.key = drawn[0]
        producer.presentation_remaining = period


def type2_cycle(cell: Cell, compartment: Compartment, params: TwocellParams) -> None:
    """Bind Type 1 cells, respond to exact lock/key matches, maybe reset.

    Binding draws with replacement, one bind per cell receptor up to the
    per-cycle attempt budget; bound pairs last one cycle.  Every (lock, key)
    equality emits its own response.  Matched antigen is not consumed; it
    expires by presentation timer only.
    """
    views = _cell_views(cell)
    type1_cells = compartment.cells_of_type(TYPE1)
    if type1_cells:
        locks = [r.lock for r in views["vr"]]
        n_binds = min(params.bind_attempts_per_cycle, len(views["cell_receptors"]))
        rng = compartment.rng
        for _ in range(n_binds):
            bound = type1_cells[rng.randrange(len(type1_cells))]
            for producer in _cell_views(bound)["antigen_producers"]:
                key = producer.key
                if key is None:
                    continue
                for lock in locks:
                    if lock == key:
                        compartment.emit_response(cell, key)
                        cell.cytokines[0] += 1

    cell.age_cycles += 1
    if cell.age_cycles >= params.cell_lifespan and cell.cytokines[0] == 0:
        for receptor in views["vr"]:
            receptor.lock = compartment.rng.randrange(SYSCALL_RANGE)
        cell.age_cycles = 0


def make_cell(cell_type: int, params: TwocellParams, rng: random.Random) -> Cell:
    """Build one cell of the requested type (id assigned by the caller)."""
    if cell_type == TYPE1:
        receptors = [
            Receptor(ReceptorKind.ANTIGEN) for _ in range(params.antigen_receptors_per_t1)
        ]
        receptors.append(Receptor(ReceptorKind.CYTOKINE, target_signal="cpu"))
        producers = [
            Producer(ProducerKind.ANTIGEN) for _ in range(params.antigen_producers_per_t1)
        ]
        return Cell(id=-1, cell_type=TYPE1, receptors=receptors, producers=producers)
    if cell_type == TYPE2:
        receptors = [
            Receptor(ReceptorKind.CELL) for _ in range(params.cell_receptors_per_t2)
        ]
        receptors.extend(
            Receptor(ReceptorKind.VR, lock=rng.randrange(SYSCALL_RANGE))
            for _ in range(params.vr_receptors_per_t2)
        )
        return Cell(
            id=-1,
            cell_type=TYPE2,
            receptors=receptors,
            producers=[Producer(ProducerKind.RESPONSE)],
            cytokines=[0],
        )
    raise ValueError(f"unknown twocell cell type {cell_type}")


def cell_factory(params: TwocellParams):
    """Factory suitable for Compartment.populate."""

    def factory(cell_type: int, rng: random.Random) -> Cell:
        return make_cell(cell_type, params, rng)

    return factory


def make_twocell_population(params: TwocellParams) -> list[Cell]:
    """Standalone population with ids 0..n-1, seeded from params.seed."""
    rng = random.Random(params.seed)
    cells = [make_cell(TYPE1, params, rng) for _ in range(params.n_type1)]
    cells += [make_cell(TYPE2, params, rng) for _ in range(params.n_type2)]
    for i, cell in enumerate(cells):
        cell.id = i
    return cells


def attach_twocell(compartment: Compartment, params: TwocellParams) -> None:
    """Register the two cycle callbacks and populate the compartment."""
    compartment.register_callback(
        TYPE1, lambda cell, comp: type1_cycle(cell, comp, params)
    )
    compartment.register_callback(
        TYPE2, lambda cell, comp: type2_cycle(cell, comp, params)
    )
    compartment.populate(
        cell_factory(params), {TYPE1: params.n_type1, TYPE2: params.n_type2}
    )

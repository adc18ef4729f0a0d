from __future__ import annotations

import random

import pytest

from aisd.tissue import (
    Cell,
    Producer,
    ProducerKind,
    TissueParams,
    create_compartment,
    format_response_csv,
    parse_kv_text,
    tissue_params_from_kv,
)
from aisd.twocell import TYPE1, TYPE2, TwocellParams, attach_twocell


def dummy_factory(cell_type: int, rng: random.Random) -> Cell:
    return Cell(id=-1, cell_type=cell_type)


class TestCreate:
    def test_defaults_empty(self):
        comp = create_compartment(seed=1)
        assert comp.antigen_count() == 0
        assert comp.cells == []
        assert comp.get_signal("cpu") == 0.0

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            TissueParams(antigen_capacity=0)
        with pytest.raises(ValueError):
            TissueParams(cycles_per_second=0)
        with pytest.raises(ValueError):
            TissueParams(signals=())

    def test_same_seed_same_stream(self):
        a = create_compartment(seed=7)
        b = create_compartment(seed=7)
        assert [a.rng.random() for _ in range(5)] == [b.rng.random() for _ in range(5)]


class TestInputs:
    def test_antigen_multiplicity(self):
        comp = create_compartment(seed=1)
        comp.add_antigen(5)
        comp.add_antigen(5)
        assert comp.antigen_count() == 2

    def test_negative_antigen_rejected(self):
        comp = create_compartment(seed=1)
        with pytest.raises(ValueError):
            comp.add_antigen(-1)

    def test_signal_last_writer_wins(self):
        comp = create_compartment(seed=1)
        comp.set_signal("cpu", 0.3)
        comp.set_signal("cpu", 0.7)
        assert comp.get_signal("cpu") == 0.7

    def test_signal_clamped_with_warning(self, caplog):
        comp = create_compartment(seed=1)
        with caplog.at_level("WARNING"):
            comp.set_signal("cpu", 1.5)
        assert comp.get_signal("cpu") == 1.0
        assert "clamped" in caplog.text

    def test_unknown_signal(self):
        comp = create_compartment(seed=1)
        with pytest.raises(ValueError, match="unknown signal"):
            comp.set_signal("disk", 0.5)

    def test_capacity_drops_oldest(self):
        comp = create_compartment(TissueParams(antigen_capacity=3), seed=1)
        for value in (10, 11, 12, 13):
            comp.add_antigen(value)
        assert comp.antigen_count() == 3
        assert comp._store[0][0] == 11


class TestPopulate:
    def test_counts_and_unique_ids(self):
        comp = create_compartment(seed=1)
        comp.populate(dummy_factory, {TYPE1: 10, TYPE2: 10})
        assert len(comp.cells) == 20
        assert sorted(c.id for c in comp.cells) == list(range(20))

    def test_zero_count_noop(self):
        comp = create_compartment(seed=1)
        comp.populate(dummy_factory, {TYPE1: 0})
        assert comp.cells == []

    def test_two_calls_never_collide(self):
        comp = create_compartment(seed=1)
        comp.populate(dummy_factory, {TYPE1: 3})
        comp.populate(dummy_factory, {TYPE2: 3})
        ids = [c.id for c in comp.cells]
        assert len(set(ids)) == 6


class TestCycle:
    def test_empty_population(self):
        comp = create_compartment(seed=1)
        report = comp.cycle()
        assert (report.antigen_consumed, report.responses_emitted) == (0, 0)
        assert comp.cycle_count == 1

    def test_missing_callback_raises(self):
        comp = create_compartment(seed=1)
        comp.populate(dummy_factory, {99: 1})
        with pytest.raises(RuntimeError, match="99"):
            comp.cycle()

    def test_deterministic_reports(self):
        def run():
            comp = create_compartment(seed=3)
            attach_twocell(comp, TwocellParams(seed=3))
            reports = []
            for i in range(50):
                if i % 5 == 0:
                    comp.add_antigen(5)
                    comp.set_signal("cpu", 0.5)
                reports.append(comp.cycle())
            return reports, comp.response_log

        (r1, log1), (r2, log2) = run(), run()
        assert r1 == r2
        assert log1 == log2

    def test_consumption_bounded_by_receptors(self):
        # 1 Type 1 cell, 2 antigen receptors, 3 antigen available
        comp = create_compartment(seed=1)
        params = TwocellParams(
            n_type1=1, n_type2=1, antigen_receptors_per_t1=2,
            antigen_producers_per_t1=5,
        )
        attach_twocell(comp, params)
        for value in (5, 5, 6):
            comp.add_antigen(value)
        report = comp.cycle()
        assert report.antigen_consumed <= 2

    def test_fairness_every_cell_every_cycle(self):
        calls: dict[int, int] = {}

        def counting(cell, comp):
            calls[cell.id] = calls.get(cell.id, 0) + 1

        comp = create_compartment(seed=1)
        comp.register_callback(7, counting)
        comp.populate(lambda t, rng: Cell(id=-1, cell_type=7), {7: 10})
        for _ in range(1000):
            comp.cycle()
        assert all(count == 1000 for count in calls.values())
        assert len(calls) == 10


class TestParamsFile:
    def test_parse_kv(self):
        kv = parse_kv_text("# comment\nsignals = cpu\nantigen_capacity = 50\n")
        assert kv == {"signals": "cpu", "antigen_capacity": "50"}

    def test_parse_kv_rejects_garbage(self):
        with pytest.raises(ValueError, match="line 1"):
            parse_kv_text("nonsense\n")

    def test_tissue_params_from_kv(self):
        params = tissue_params_from_kv(
            {"signals": "cpu,net", "antigen_capacity": "500", "cycles_per_second": "5"}
        )
        assert params.signals == ("cpu", "net")
        assert params.antigen_capacity == 500
        assert params.cycles_per_second == 5.0


def test_response_csv_format():
    comp = create_compartment(seed=1)
    cell = Cell(id=3, cell_type=TYPE2, producers=[Producer(ProducerKind.RESPONSE)])
    comp.cycle_count = 4
    comp.emit_response(cell, 5)
    text = format_response_csv(comp.response_log)
    lines = text.splitlines()
    assert lines[0] == "cycle,wall_time,cell_id,syscall_number,syscall_name"
    assert lines[1] == "4,0.400,3,5,open"

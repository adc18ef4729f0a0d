from __future__ import annotations

import math
from collections import Counter

import pytest

from aisd.trace_model import (
    DEFAULT_TABLE,
    Label,
    MonitorParseError,
    ReplayLog,
    ReplayLogFormatError,
    SignalSample,
    StraceParseError,
    SyscallEvent,
    SyscallTable,
    dataset_stats,
    format_replay_log,
    merge_to_replay_log,
    parse_monitor_log,
    parse_replay_log,
    parse_strace_log,
    syscall_name,
)

STRACE_FIXTURE = """\
0.000000 open("/var/lib/nfs/state", O_RDWR) = 3
0.000210 read(3, "\\1", 1) = 1
--- SIGCHLD (Child exited) ---
"""


def brute_force_max_rate(log: ReplayLog) -> int:
    """Independent recount: events per integer-aligned 1 s window."""
    counts = Counter(int(math.floor(e.timestamp)) for e in log.syscall_events())
    return max(counts.values()) if counts else 0


class TestSyscallTable:
    def test_reference_names(self):
        # 1 exit, 2 fork, 5 open, 301 socket, 303 connect
        assert syscall_name(1) == "exit"
        assert syscall_name(2) == "fork"
        assert syscall_name(5) == "open"
        assert syscall_name(301) == "socket"
        assert syscall_name(303) == "connect"
        assert syscall_name(90) == "old_mmap"

    def test_unknown_number_fallback(self):
        assert syscall_name(999) == "unknown(999)"

    def test_reverse_lookup(self):
        assert DEFAULT_TABLE.number("open") == 5
        assert DEFAULT_TABLE.number("recvfrom") == 312
        assert DEFAULT_TABLE.number("nosuchcall") is None

    def test_from_tsv(self):
        table = SyscallTable.from_tsv("# comment\n1\texit\n42\tanswer\n")
        assert table.name(42) == "answer"
        assert table.number("exit") == 1
        assert table.name(7) == "unknown(7)"

    def test_from_tsv_rejects_garbage(self):
        with pytest.raises(ValueError, match="line 1"):
            SyscallTable.from_tsv("not a table line\n")

    def test_from_tsv_file(self, tmp_path):
        path = tmp_path / "table.tsv"
        path.write_text("5\topen\n")
        assert SyscallTable.from_tsv_file(path).name(5) == "open"


class TestStraceParser:
    def test_open_line(self):
        result = parse_strace_log('0.000000 open("/etc/passwd", O_RDONLY) = 3\n')
        assert len(result.events) == 1
        event = result.events[0]
        assert event.timestamp == 0.0
        assert event.syscall_number == 5

    def test_empty_input(self):
        assert parse_strace_log("").events == ()

    def test_fixture_counts(self):
        # hand count: two syscall lines, one SIGCHLD notice
        result = parse_strace_log(STRACE_FIXTURE)
        assert len(result.events) == 2
        assert result.skipped == 1
        assert [e.syscall_number for e in result.events] == [5, 3]

    def test_pid_prefix(self):
        result = parse_strace_log("712 1.5 close(3) = 0\n")
        assert result.events[0].pid == 712
        assert result.events[0].syscall_number == 6

    def test_malformed_timestamp_raises_with_line(self):
        with pytest.raises(StraceParseError, match="line 2"):
            parse_strace_log("0.1 open(x) = 0\n0.1.2 open(x) = 0\n")

    def test_unknown_name_skipped_by_default(self):
        result = parse_strace_log("0.1 frobnicate(1) = 0\n")
        assert result.events == ()
        assert result.unknown == 1

    def test_unknown_name_strict(self):
        with pytest.raises(StraceParseError, match="frobnicate"):
            parse_strace_log("0.1 frobnicate(1) = 0\n", strict=True)


class TestMonitorParser:
    def test_normalization(self):
        samples = parse_monitor_log("0.1 rpc.statd 1 50.0 1234\n")
        assert samples == [SignalSample(0.1, "cpu", 0.5)]

    def test_empty(self):
        assert parse_monitor_log("") == []

    def test_ten_records(self):
        text = "".join(f"{(k + 1) / 10:.1f} statd 1 {k}.0 100\n" for k in range(10))
        samples = parse_monitor_log(text)
        assert len(samples) == 10
        assert samples[0].timestamp == pytest.approx(0.1)
        assert samples[-1].timestamp == pytest.approx(1.0)

    def test_clamps_out_of_range(self, caplog):
        samples = parse_monitor_log("0.1 statd 1 150.0 1\n")
        assert samples[0].value == 1.0

    def test_non_monotone_rejected(self):
        with pytest.raises(MonitorParseError, match="line 2"):
            parse_monitor_log("0.2 s 1 10 1\n0.1 s 1 10 1\n")


class TestMerge:
    def test_distinct_timestamps(self):
        events = [SyscallEvent(0.5, 5), SyscallEvent(1.5, 6)]
        samples = [SignalSample(0.1, "cpu", 0.2), SignalSample(1.0, "cpu", 0.3)]
        log = merge_to_replay_log(events, samples, "t")
        assert [r.timestamp for r in log.records] == [0.1, 0.5, 1.0, 1.5]

    def test_tie_puts_signal_first(self):
        log = merge_to_replay_log(
            [SyscallEvent(1.0, 5)], [SignalSample(1.0, "cpu", 0.4)], "t"
        )
        assert isinstance(log.records[0], SignalSample)
        assert isinstance(log.records[1], SyscallEvent)

    def test_startup_burst_shape(self):
        # echoes the first reference scenario: 405 events inside [0, 1),
        # samples every 0.1 s across 38 s
        events = [SyscallEvent(i / 405.0 * 0.999, 5) for i in range(405)]
        samples = [SignalSample(k / 10.0, "cpu", 0.1) for k in range(1, 381)]
        log = merge_to_replay_log(events, samples, "normal1-like")
        assert 37.9 <= log.duration <= 38.0
        assert len(log.syscall_events()) == 405
        assert len(log.signal_samples()) == 380
        assert dataset_stats(log).max_antigen_rate == 405


def test_parse_then_merge_preserves_counts():
    strace_text = (
        "0.00 open(f) = 3\n"
        "0.40 read(3) = 1\n"
        "--- SIGCHLD ---\n"
        "0.90 close(3) = 0\n"
    )
    monitor_text = "0.1 statd 1 20 5\n0.2 statd 1 30 5\n0.3 statd 1 10 5\n"
    parsed = parse_strace_log(strace_text)
    samples = parse_monitor_log(monitor_text)
    log = merge_to_replay_log(parsed.events, samples, "roundtrip")
    assert len(log.syscall_events()) == len(parsed.events) == 3
    assert len(log.signal_samples()) == len(samples) == 3


class TestDatasetStats:
    def test_empty(self):
        assert dataset_stats(ReplayLog("x", ())).as_tuple() == (0, 0, 0)

    def test_matches_brute_force(self):
        events = [SyscallEvent(t, 5) for t in (0.1, 0.2, 0.9, 1.1, 2.5, 2.6, 2.7)]
        log = merge_to_replay_log(events, [], "t")
        stats = dataset_stats(log)
        assert stats.max_antigen_rate == brute_force_max_rate(log) == 3
        assert stats.total_antigen == 7
        assert stats.total_time == 3

    def test_total_time_is_ceiling(self):
        log = merge_to_replay_log([SyscallEvent(4.2, 5)], [], "t")
        assert dataset_stats(log).total_time == 5


class TestReplayLogFormat:
    def test_round_trip(self):
        events = [SyscallEvent(0.25, 5, label=Label.ATTACK), SyscallEvent(1.0, 6)]
        samples = [SignalSample(0.1, "cpu", 0.5)]
        log = merge_to_replay_log(events, samples, "demo")
        parsed = parse_replay_log(format_replay_log(log))
        assert parsed.scenario_name == "demo"
        assert len(parsed.syscall_events()) == 2
        assert len(parsed.signal_samples()) == 1
        assert parsed.syscall_events()[0].label is Label.ATTACK

    def test_rejects_garbage(self):
        with pytest.raises(ReplayLogFormatError, match="line 1"):
            parse_replay_log("Z 0.1 what 1\n")


class TestValidation:
    def test_negative_timestamp(self):
        with pytest.raises(ValueError):
            SyscallEvent(-0.1, 5)

    def test_syscall_out_of_range(self):
        with pytest.raises(ValueError):
            SyscallEvent(0.0, 512)

    def test_signal_out_of_range(self):
        with pytest.raises(ValueError):
            SignalSample(0.0, "cpu", 1.5)

"""Trace records, log parsers, dataset statistics and the syscall number table.

The records here are the raw material of every other module: timestamped
syscall events (antigen) and context signal samples (CPU usage), merged into
a single time-ordered replay log per scenario.
"""
from __future__ import annotations

import enum
import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

logger = logging.getLogger(__name__)

# Valid syscall numbers are 0 <= nr < SYSCALL_RANGE.  The classic 32-bit
# table plus the socket-family block (300 + subcode) fits comfortably.
SYSCALL_RANGE = 512


class Label(str, enum.Enum):
    """Ground-truth origin of a syscall event."""

    NORMAL = "normal"
    ATTACK = "attack"


class TraceError(ValueError):
    """Base class for trace parsing and format errors."""


class StraceParseError(TraceError):
    pass


class MonitorParseError(TraceError):
    pass


class ReplayLogFormatError(TraceError):
    pass


@dataclass(frozen=True)
class SyscallEvent:
    """One observed syscall: antigen from the monitored process."""

    timestamp: float
    syscall_number: int
    pid: int | None = None
    label: Label = Label.NORMAL

    def __post_init__(self) -> None:
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be >= 0, got {self.timestamp}")
        if not 0 <= self.syscall_number < SYSCALL_RANGE:
            raise ValueError(
                f"syscall number {self.syscall_number} outside [0, {SYSCALL_RANGE})"
            )
        if self.pid is not None and self.pid < 0:
            raise ValueError(f"pid must be >= 0, got {self.pid}")


@dataclass(frozen=True)
class SignalSample:
    """One context-signal reading, normalized to [0, 1]."""

    timestamp: float
    signal_name: str
    value: float

    def __post_init__(self) -> None:
        if self.timestamp < 0:
            raise ValueError(f"timestamp must be >= 0, got {self.timestamp}")
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"signal value {self.value} outside [0, 1]")


Record = SyscallEvent | SignalSample


@dataclass(frozen=True)
class ReplayLog:
    """A merged, time-ordered stream of syscall events and signal samples.

    Records are sorted by timestamp; at equal timestamps signal samples
    precede syscall events so consumers always see the freshest signal
    context before the antigen that arrived with it.
    """

    scenario_name: str
    records: tuple[Record, ...]

    @property
    def duration(self) -> float:
        if not self.records:
            return 0.0
        return max(r.timestamp for r in self.records)

    def syscall_events(self) -> list[SyscallEvent]:
        return [r for r in self.records if isinstance(r, SyscallEvent)]

    def signal_samples(self) -> list[SignalSample]:
        return [r for r in self.records if isinstance(r, SignalSample)]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class DatasetStats:
    """Per-scenario summary: whole seconds, event count, peak 1 s event rate."""

    total_time: int
    total_antigen: int
    max_antigen_rate: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.total_time, self.total_antigen, self.max_antigen_rate)


# ---------------------------------------------------------------------------
# Syscall number table
# ---------------------------------------------------------------------------

# Classic 32-bit syscall numbers.  The socket family is mapped into the
# 300 block (300 + socketcall subcode), which is how the numbers 301/303
# etc. arise for socket/connect.
_DEFAULT_SYSCALLS: dict[int, str] = {
    1: "exit",
    2: "fork",
    3: "read",
    4: "write",
    5: "open",
    6: "close",
    7: "waitpid",
    8: "creat",
    9: "link",
    10: "unlink",
    11: "execve",
    12: "chdir",
    13: "time",
    14: "mknod",
    15: "chmod",
    16: "lchown",
    19: "lseek",
    20: "getpid",
    21: "mount",
    22: "umount",
    23: "setuid",
    24: "getuid",
    25: "stime",
    26: "ptrace",
    27: "alarm",
    29: "pause",
    30: "utime",
    33: "access",
    34: "nice",
    36: "sync",
    37: "kill",
    38: "rename",
    39: "mkdir",
    40: "rmdir",
    41: "dup",
    42: "pipe",
    43: "times",
    45: "brk",
    46: "setgid",
    47: "getgid",
    48: "signal",
    49: "geteuid",
    50: "getegid",
    52: "umount2",
    54: "ioctl",
    55: "fcntl",
    57: "setpgid",
    60: "umask",
    61: "chroot",
    62: "ustat",
    63: "dup2",
    64: "getppid",
    65: "getpgrp",
    66: "setsid",
    67: "sigaction",
    70: "setreuid",
    71: "setregid",
    72: "sigsuspend",
    73: "sigpending",
    74: "sethostname",
    75: "setrlimit",
    76: "getrlimit",
    77: "getrusage",
    78: "gettimeofday",
    79: "settimeofday",
    80: "getgroups",
    81: "setgroups",
    83: "symlink",
    85: "readlink",
    86: "uselib",
    87: "swapon",
    88: "reboot",
    90: "old_mmap",
    91: "munmap",
    92: "truncate",
    93: "ftruncate",
    94: "fchmod",
    95: "fchown",
    96: "getpriority",
    97: "setpriority",
    99: "statfs",
    100: "fstatfs",
    102: "socketcall",
    103: "syslog",
    104: "setitimer",
    105: "getitimer",
    106: "stat",
    107: "lstat",
    108: "fstat",
    111: "vhangup",
    114: "wait4",
    115: "swapoff",
    116: "sysinfo",
    118: "fsync",
    119: "sigreturn",
    120: "clone",
    121: "setdomainname",
    122: "uname",
    124: "adjtimex",
    125: "mprotect",
    126: "sigprocmask",
    128: "init_module",
    129: "delete_module",
    132: "getpgid",
    133: "fchdir",
    136: "personality",
    138: "setfsuid",
    139: "setfsgid",
    140: "_llseek",
    141: "getdents",
    142: "select",
    143: "flock",
    144: "msync",
    145: "readv",
    146: "writev",
    147: "getsid",
    148: "fdatasync",
    150: "mlock",
    151: "munlock",
    152: "mlockall",
    153: "munlockall",
    154: "sched_setparam",
    155: "sched_getparam",
    156: "sched_setscheduler",
    157: "sched_getscheduler",
    158: "sched_yield",
    159: "sched_get_priority_max",
    160: "sched_get_priority_min",
    162: "nanosleep",
    163: "mremap",
    164: "setresuid",
    165: "getresuid",
    168: "poll",
    170: "setresgid",
    171: "getresgid",
    172: "prctl",
    173: "rt_sigreturn",
    174: "rt_sigaction",
    175: "rt_sigprocmask",
    176: "rt_sigpending",
    177: "rt_sigtimedwait",
    179: "rt_sigsuspend",
    180: "pread64",
    181: "pwrite64",
    182: "chown",
    183: "getcwd",
    184: "capget",
    185: "capset",
    186: "sigaltstack",
    187: "sendfile",
    190: "vfork",
    191: "ugetrlimit",
    192: "mmap2",
    193: "truncate64",
    194: "ftruncate64",
    195: "stat64",
    196: "lstat64",
    197: "fstat64",
    199: "getuid32",
    200: "getgid32",
    201: "geteuid32",
    202: "getegid32",
    207: "fchown32",
    212: "chown32",
    213: "setuid32",
    214: "setgid32",
    217: "pivot_root",
    218: "mincore",
    219: "madvise",
    220: "getdents64",
    221: "fcntl64",
    224: "gettid",
    240: "futex",
    243: "set_thread_area",
    252: "exit_group",
    254: "epoll_create",
    255: "epoll_ctl",
    256: "epoll_wait",
    258: "set_tid_address",
    265: "clock_gettime",
    266: "clock_getres",
    # socket family: 300 + socketcall subcode
    301: "socket",
    302: "bind",
    303: "connect",
    304: "listen",
    305: "accept",
    306: "getsockname",
    307: "getpeername",
    308: "socketpair",
    309: "send",
    310: "recv",
    311: "sendto",
    312: "recvfrom",
    313: "shutdown",
    314: "setsockopt",
    315: "getsockopt",
    316: "sendmsg",
    317: "recvmsg",
}

# Spellings strace emits that differ from the table's canonical names.
_NAME_ALIASES = {
    "mmap": 90,
    "_newselect": 142,
    "oldselect": 142,
    "fcntl64": 221,
}


class SyscallTable:
    """Bidirectional syscall number/name map."""

    def __init__(self, numbers_to_names: dict[int, str]):
        self._names = dict(numbers_to_names)
        self._numbers: dict[str, int] = {}
        for nr, name in self._names.items():
            # first entry wins so canonical low numbers keep their names
            self._numbers.setdefault(name, nr)

    def name(self, number: int) -> str:
        return self._names.get(number, f"unknown({number})")

    def number(self, name: str) -> int | None:
        nr = self._numbers.get(name)
        if nr is None:
            nr = _NAME_ALIASES.get(name)
        return nr

    def __contains__(self, number: int) -> bool:
        return number in self._names

    def __len__(self) -> int:
        return len(self._names)

    @classmethod
    def from_tsv(cls, text: str) -> SyscallTable:
        """Load a table from `number<TAB>name` lines; # comments allowed."""
        mapping: dict[int, str] = {}
        for i, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise TraceError(f"line {i}: expected 'number<TAB>name', got {raw!r}")
            try:
                nr = int(parts[0])
            except ValueError:
                raise TraceError(f"line {i}: bad syscall number {parts[0]!r}") from None
            mapping[nr] = parts[1].strip()
        return cls(mapping)

    @classmethod
    def from_tsv_file(cls, path: str | Path) -> SyscallTable:
        return cls.from_tsv(Path(path).read_text(encoding="utf-8"))


DEFAULT_TABLE = SyscallTable(_DEFAULT_SYSCALLS)


def syscall_name(number: int, table: SyscallTable | None = None) -> str:
    """Name for a syscall number, or ``unknown(<n>)`` if unmapped."""
    return (table or DEFAULT_TABLE).name(number)


# ---------------------------------------------------------------------------
# Parsers
# ---------------------------------------------------------------------------

# `<float-timestamp> <name>(<args...>) = <ret>` with an optional leading pid.
_STRACE_RECORD_RE = re.compile(
    r"^(?:(?P<pid>\d+)\s+)?(?P<ts>\S+)\s+(?P<name>[A-Za-z_]\w*)\((?P<args>.*)\)\s*=\s*(?P<ret>\S.*)$"
)


@dataclass(frozen=True)
class StraceParseResult:
    """Parsed syscall events plus skip accounting."""

    events: tuple[SyscallEvent, ...]
    skipped: int = 0
    unknown: int = 0


def parse_strace_log(
    text: str,
    *,
    table: SyscallTable | None = None,
    strict: bool = False,
    label: Label = Label.NORMAL,
) -> StraceParseResult:
    """Parse strace output into syscall events.

    Lines that are not syscall records (signal notices, resumption markers,
    exit notices) are skipped and counted.  A record line with a timestamp
    that does not parse is an error; an unknown syscall name is skipped and
    counted, or raises in strict mode.
    """
    table = table or DEFAULT_TABLE
    events: list[SyscallEvent] = []
    skipped = 0
    unknown = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        m = _STRACE_RECORD_RE.match(line)
        if m is None:
            skipped += 1
            continue
        try:
            timestamp = float(m.group("ts"))
        except ValueError:
            raise StraceParseError(
                f"line {lineno}: malformed timestamp {m.group('ts')!r}"
            ) from None
        if timestamp < 0:
            raise StraceParseError(f"line {lineno}: negative timestamp {timestamp}")
        name = m.group("name")
        nr = table.number(name)
        if nr is None:
            if strict:
                raise StraceParseError(f"line {lineno}: unknown syscall name {name!r}")
            logger.warning("line %d: unknown syscall name %r skipped", lineno, name)
            unknown += 1
            continue
        pid = int(m.group("pid")) if m.group("pid") else None
        events.append(SyscallEvent(timestamp, nr, pid=pid, label=label))
    return StraceParseResult(tuple(events), skipped=skipped, unknown=unknown)


def parse_monitor_log(
    text: str,
    *,
    signal_name: str = "cpu",
    full_scale_cpu: float = 100.0,
) -> list[SignalSample]:
    """Parse process-monitor records into CPU signal samples.

    Each record is `<timestamp> <proc-name> <n-children> <cpu%> <mem>`;
    one sample is produced per CPU reading, normalized by the full-scale
    percentage.  Readings outside [0, full_scale] are clamped with a warning;
    timestamps must be non-decreasing.
    """
    if full_scale_cpu <= 0:
        raise ValueError("full_scale_cpu must be positive")
    samples: list[SignalSample] = []
    last_ts = -math.inf
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 5:
            raise MonitorParseError(
                f"line {lineno}: expected 5 fields, got {len(parts)}"
            )
        try:
            ts = float(parts[0])
            cpu_raw = float(parts[3])
        except ValueError as exc:
            raise MonitorParseError(f"line {lineno}: {exc}") from None
        if ts < last_ts:
            raise MonitorParseError(
                f"line {lineno}: timestamp {ts} decreases (previous {last_ts})"
            )
        last_ts = ts
        value = cpu_raw / full_scale_cpu
        if value < 0.0 or value > 1.0:
            logger.warning(
                "line %d: cpu reading %s outside [0, %s], clamped",
                lineno,
                cpu_raw,
                full_scale_cpu,
            )
            value = min(1.0, max(0.0, value))
        samples.append(SignalSample(ts, signal_name, value))
    return samples


# ---------------------------------------------------------------------------
# Merging and statistics
# ---------------------------------------------------------------------------

def _record_rank(record: Record) -> int:
    # signal before antigen on timestamp ties
    return 0 if isinstance(record, SignalSample) else 1


def merge_to_replay_log(
    events: Iterable[SyscallEvent],
    samples: Iterable[SignalSample],
    name: str,
) -> ReplayLog:
    """Merge individually ordered event and sample streams into one log."""
    combined: list[Record] = [*samples, *events]
    combined.sort(key=lambda r: (r.timestamp, _record_rank(r)))
    return ReplayLog(scenario_name=name, records=tuple(combined))


def dataset_stats(log: ReplayLog) -> DatasetStats:
    """Summarize a log: ceil(duration), event count, peak events per second.

    The peak rate uses fixed integer-aligned windows [k, k+1).
    """
    events = log.syscall_events()
    if not log.records:
        return DatasetStats(0, 0, 0)
    per_second = Counter(int(math.floor(e.timestamp)) for e in events)
    max_rate = max(per_second.values()) if per_second else 0
    return DatasetStats(
        total_time=int(math.ceil(log.duration)),
        total_antigen=len(events),
        max_antigen_rate=max_rate,
    )


# ---------------------------------------------------------------------------
# Replay-log file format
# ---------------------------------------------------------------------------
#
# Line-oriented text, UTF-8, LF:
#   # scenario <name>
#   A <timestamp> <syscall_number> <label>
#   S <timestamp> <signal_name> <value>

def format_replay_log(log: ReplayLog) -> str:
    lines = [f"# scenario {log.scenario_name}"]
    for rec in log.records:
        if isinstance(rec, SyscallEvent):
            lines.append(f"A {rec.timestamp:.6f} {rec.syscall_number} {rec.label.value}")
        else:
            lines.append(f"S {rec.timestamp:.6f} {rec.signal_name} {rec.value:.6f}")
    return "\n".join(lines) + "\n"


def write_replay_log(log: ReplayLog, path: str | Path) -> None:
    Path(path).write_text(format_replay_log(log), encoding="utf-8", newline="\n")


def parse_replay_log(text: str, default_name: str = "unnamed") -> ReplayLog:
    name = default_name
    records: list[Record] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) >= 2 and parts[0] == "scenario":
                name = parts[1]
            continue
        parts = line.split()
        try:
            if parts[0] == "A" and len(parts) == 4:
                records.append(
                    SyscallEvent(float(parts[1]), int(parts[2]), label=Label(parts[3]))
                )
            elif parts[0] == "S" and len(parts) == 4:
                records.append(SignalSample(float(parts[1]), parts[2], float(parts[3])))
            else:
                raise ReplayLogFormatError(f"line {lineno}: unrecognized record {raw!r}")
        except ReplayLogFormatError:
            raise
        except ValueError as exc:
            raise ReplayLogFormatError(f"line {lineno}: {exc}") from None
    # stable sort keeps well-formed files untouched, repairs foreign ones
    records.sort(key=lambda r: (r.timestamp, _record_rank(r)))
    return ReplayLog(scenario_name=name, records=tuple(records))


def read_replay_log(path: str | Path) -> ReplayLog:
    p = Path(path)
    return parse_replay_log(p.read_text(encoding="utf-8"), default_name=p.stem)

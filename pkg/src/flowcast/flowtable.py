"""Flow-table state machine: priority matching, counters, idle/hard
timeouts, and importance-ordered eviction under a fixed capacity.

Timestamps are caller-supplied monotonic numbers; timeouts use the same
unit (0 disables).  The table never reads a clock, so replays are exact.
Single-writer: callers serialize mutations.
"""

import bisect
import enum
from dataclasses import dataclass

from .ofwire import MatchFields


class DuplicateCookie(ValueError):
    pass


class UnknownCookie(KeyError):
    pass


class RemovalReason(enum.Enum):
    IDLE_TIMEOUT = "idle_timeout"
    HARD_TIMEOUT = "hard_timeout"
    EVICTED = "evicted"
    DELETED = "deleted"


@dataclass
class FlowEntry:
    """One installed flow: match plus counters and lifecycle fields."""

    match: MatchFields
    priority: int
    cookie: int
    importance: int
    idle_timeout: float = 0
    hard_timeout: float = 0
    send_flow_rem: bool = True
    packet_count: int = 0
    byte_count: int = 0
    installed_at: float = 0
    last_matched_at: float = 0

    def __post_init__(self):
        if not 1 <= self.importance <= 5:
            raise ValueError(f"importance out of [1, 5]: {self.importance}")
        if not 0 <= self.priority <= 0xFFFF:
            raise ValueError(f"priority out of u16 range: {self.priority}")
        if self.idle_timeout < 0 or self.hard_timeout < 0:
            raise ValueError("timeouts must be nonnegative")


@dataclass(frozen=True)
class RemovalEvent:
    entry: FlowEntry
    reason: RemovalReason
    removed_at: float

    @property
    def duration(self):
        return self.removed_at - self.entry.installed_at


class FlowTable:
    """Capacity-limited match-action table keyed by cookie.

    Matching walks entries in (priority desc, insertion order) and the first
    hit wins.  A full table evicts the minimum-importance entry (oldest
    installed_at, then oldest insertion, on ties) before inserting.
    """

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1: {capacity}")
        self.capacity = capacity
        self._entries = {}
        self._order = []  # sorted (-priority, seq, cookie)
        self._keys = {}  # cookie -> (-priority, seq, cookie)
        self._seq = 0

    def __len__(self):
        return len(self._entries)

    def __contains__(self, cookie):
        return cookie in self._entries

    def get(self, cookie):
        return self._entries.get(cookie)

    def entries(self):
        return list(self._entries.values())

    def insert(self, entry, now):
        """Install entry, evicting one victim first if the table is full.

        Returns the eviction RemovalEvent, or None.
        """
        if entry.cookie in self._entries:
            raise DuplicateCookie(entry.cookie)
        event = None
        if len(self._entries) >= self.capacity:
            victim = min(
                self._entries.values(),
                key=lambda e: (e.importance, e.installed_at, self._keys[e.cookie][1]),
            )
            event = RemovalEvent(self._pop(victim.cookie), RemovalReason.EVICTED, now)
        entry.installed_at = now
        entry.last_matched_at = now
        key = (-entry.priority, self._seq, entry.cookie)
        self._seq += 1
        bisect.insort(self._order, key)
        self._keys[entry.cookie] = key
        self._entries[entry.cookie] = entry
        return event

    def match_packet(self, pkt, in_port, now):
        """Cookie of the best-matching entry (counters updated), or None on miss."""
        for _, _, cookie in self._order:
            entry = self._entries[cookie]
            if entry.match.matches_packet(pkt, in_port):
                entry.packet_count += 1
                entry.byte_count += pkt.first_len
                entry.last_matched_at = now
                return cookie
        return None

    def tick(self, now) -> list:
        """Expire entries; hard timeout wins when both trip in the same tick."""
        events = []
        for key in sorted(self._keys.values(), key=lambda k: k[1]):  # insertion order
            entry = self._entries[key[2]]
            if entry.hard_timeout > 0 and now - entry.installed_at >= entry.hard_timeout:
                events.append(RemovalEvent(entry, RemovalReason.HARD_TIMEOUT, now))
            elif entry.idle_timeout > 0 and now - entry.last_matched_at >= entry.idle_timeout:
                events.append(RemovalEvent(entry, RemovalReason.IDLE_TIMEOUT, now))
        for event in events:
            self._pop(event.entry.cookie)
        return events

    def delete(self, cookie, now):
        if cookie not in self._entries:
            raise UnknownCookie(cookie)
        return RemovalEvent(self._pop(cookie), RemovalReason.DELETED, now)

    def _pop(self, cookie):
        entry = self._entries.pop(cookie)
        key = self._keys.pop(cookie)
        idx = bisect.bisect_left(self._order, key)
        del self._order[idx]
        return entry

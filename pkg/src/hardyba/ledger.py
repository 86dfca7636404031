"""Bookkeeping types shared by the protocol engine, strategies and verifier.

Parties are the strings ``"A"``, ``"B"`` (lieutenants, each distributing one
sub-protocol) and ``"C"`` (commander). Settings are int8 codes ``U=0``,
``D=1`` (``-1`` when unset); outcomes are int8 ``+1``/``-1`` (``0`` unset).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable

import numpy as np

PARTIES = ("A", "B", "C")
LIEUTENANTS = ("A", "B")
U, D = 0, 1
SETTING_NAMES = ("U", "D")


def other(lieutenant: str) -> str:
    return "B" if lieutenant == "A" else "A"


def link_class(p: str, q: str) -> str:
    return "".join(sorted(p + q))


class ProtocolAbort(RuntimeError):
    """A phase was attempted out of order."""


class ConfigurationError(ValueError):
    pass


class SlotKind(IntEnum):
    DIRECT_TO_A = 0
    DIRECT_TO_B = 1
    DIRECT_TO_C = 2
    SWAP_HALF = 3
    DISCARDED = 4

    @classmethod
    def direct_to(cls, party: str) -> "SlotKind":
        return cls[f"DIRECT_TO_{party}"]


class RunKind(IntEnum):
    CONVERT_PEER = 0
    CONVERT_COMMANDER = 1
    SWAP = 2


# state codes carried by ledger pairs
PSI, CHI = 0, 1


@dataclass(frozen=True)
class SlotRecord:
    slot_id: int
    distributor: str
    holder: str
    run_id: int
    kind: SlotKind
    consumed: bool
    linked_slot: int | None


@dataclass(eq=False)
class RunLedger:
    """Ground truth for one distributor's sub-protocol.

    Slot arrays are index-aligned; ``partner`` holds the index of the slot a
    qubit is Hardy-correlated with (-1 if none) and is never exposed to
    non-distributors. ``settings``/``outcomes`` are filled during measurement.
    """

    distributor: str
    n_parameter: int
    run_ids: np.ndarray
    run_kinds: np.ndarray
    run_kept: np.ndarray
    run_cheat: np.ndarray
    slot_ids: np.ndarray
    holders: np.ndarray
    slot_runs: np.ndarray
    kinds: np.ndarray
    consumed: np.ndarray
    partner: np.ndarray
    pair_first: np.ndarray
    pair_second: np.ndarray
    pair_state: np.ndarray
    settings: np.ndarray = None
    outcomes: np.ndarray = None
    c_message: np.ndarray = None
    links_revealed: bool = False

    def __post_init__(self):
        size = self.slot_ids.size
        if self.settings is None:
            self.settings = np.full(size, -1, dtype=np.int8)
        if self.outcomes is None:
            self.outcomes = np.zeros(size, dtype=np.int8)
        if self.c_message is None:
            self.c_message = np.zeros(size, dtype=bool)

    @property
    def peer(self) -> str:
        return other(self.distributor)

    @property
    def copies_per_neighbor(self) -> int:
        return 6 * self.n_parameter

    @property
    def r1(self) -> np.ndarray:
        failed = ~self.run_kept & (self.run_kinds != RunKind.SWAP)
        return np.sort(self.run_ids[failed])

    @property
    def r2(self) -> np.ndarray:
        failed = ~self.run_kept & (self.run_kinds == RunKind.SWAP)
        return np.sort(self.run_ids[failed])

    @property
    def r3(self) -> np.ndarray:
        return np.union1d(self.r1, self.r2)

    @property
    def discarded_slots(self) -> np.ndarray:
        """Labels of every qubit in an R3 run: the public form of the discard list."""
        return np.sort(self.slot_ids[np.isin(self.slot_runs, self.r3)])

    @property
    def active(self) -> np.ndarray:
        """Mask of slots that survive post-selection (announced during measurement)."""
        return self.kinds != SlotKind.DISCARDED

    def holder_mask(self, party: str) -> np.ndarray:
        return (self.holders == party) & self.active

    @property
    def slots(self) -> list[SlotRecord]:
        out = []
        for i in range(self.slot_ids.size):
            linked = None
            if self.links_revealed and self.partner[i] >= 0:
                linked = int(self.slot_ids[self.partner[i]])
            out.append(
                SlotRecord(
                    int(self.slot_ids[i]),
                    self.distributor,
                    str(self.holders[i]),
                    int(self.slot_runs[i]),
                    SlotKind(int(self.kinds[i])),
                    bool(self.consumed[i]),
                    linked,
                )
            )
        return out

    @property
    def hardy_pairs(self) -> list[tuple[int, int, tuple[str, str]]]:
        return [
            (
                int(self.slot_ids[i]),
                int(self.slot_ids[j]),
                (str(self.holders[i]), str(self.holders[j])),
            )
            for i, j in zip(self.pair_first, self.pair_second)
        ]

    def true_links(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Correlation links grouped by party pair, each side in alphabetical order."""
        return group_links(
            self.holders[self.pair_first],
            self.slot_ids[self.pair_first],
            self.holders[self.pair_second],
            self.slot_ids[self.pair_second],
        )

    def pair_counts(self) -> dict[str, int]:
        links = self.true_links()
        return {cls: int(links[cls][0].size) for cls in sorted(links)}


def group_links(p1, s1, p2, s2) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    p1, p2 = np.asarray(p1), np.asarray(p2)
    s1, s2 = np.asarray(s1, dtype=np.int64), np.asarray(s2, dtype=np.int64)
    out = {}
    for cls in ("AB", "AC", "BC"):
        fwd = (p1 == cls[0]) & (p2 == cls[1])
        rev = (p1 == cls[1]) & (p2 == cls[0])
        x = np.concatenate([s1[fwd], s2[rev]])
        y = np.concatenate([s2[fwd], s1[rev]])
        order = np.argsort(x, kind="stable")
        out[cls] = (x[order], y[order])
    return out


@dataclass
class OwnSlots:
    slot_ids: np.ndarray
    settings: np.ndarray
    outcomes: np.ndarray
    message: np.ndarray | None = None  # commander only: True for message-basis slots


@dataclass
class PartyView:
    """What one party legitimately knows at the current phase.

    Keyed by distributor first. Own slots are sorted by slot id, so the view
    carries no trace of how the distributor created them.
    """

    role: str
    params: dict
    discards: dict = field(default_factory=dict)
    own: dict = field(default_factory=dict)
    announcements: dict = field(default_factory=dict)
    message_lists: dict = field(default_factory=dict)
    links: dict = field(default_factory=dict)
    disclosed_settings: dict = field(default_factory=dict)
    messages: dict = field(default_factory=dict)
    private: dict = field(default_factory=dict)

    # lookups -------------------------------------------------------------

    def outcomes_of(self, distributor: str, party: str, slots: np.ndarray) -> np.ndarray:
        ann = self.announcements.get(distributor, {}).get(party)
        if ann is None:
            return np.zeros(len(slots), dtype=np.int8)
        return _lookup(ann[0], ann[1], slots, 0)

    def settings_of(self, distributor: str, party: str, slots: np.ndarray) -> np.ndarray:
        if party == self.role and distributor in self.own:
            own = self.own[distributor]
            return _lookup(own.slot_ids, own.settings, slots, -1)
        disc = self.disclosed_settings.get(distributor, {}).get(party)
        if disc is None:
            return np.full(len(slots), -1, dtype=np.int8)
        return _lookup(disc[0], disc[1], slots, -1)

    # serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        def own(o: OwnSlots) -> dict:
            d = {
                "slot_ids": o.slot_ids.tolist(),
                "settings": o.settings.tolist(),
                "outcomes": o.outcomes.tolist(),
            }
            if o.message is not None:
                d["message"] = o.message.tolist()
            return d

        return {
            "role": self.role,
            "params": self.params,
            "discards": {d: v.tolist() for d, v in sorted(self.discards.items())},
            "own": {d: own(v) for d, v in sorted(self.own.items())},
            "announcements": _nested_pairs(self.announcements),
            "message_lists": {
                d: {k: v.tolist() for k, v in sorted(lists.items())}
                for d, lists in sorted(self.message_lists.items())
            },
            "links": _nested_pairs(self.links),
            "disclosed_settings": _nested_pairs(self.disclosed_settings),
            "messages": dict(sorted(self.messages.items())),
            "private": _jsonable(self.private),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "PartyView":
        def own(d: dict) -> OwnSlots:
            msg = d.get("message")
            return OwnSlots(
                np.asarray(d["slot_ids"], dtype=np.int64),
                np.asarray(d["settings"], dtype=np.int8),
                np.asarray(d["outcomes"], dtype=np.int8),
                None if msg is None else np.asarray(msg, dtype=bool),
            )

        return cls(
            role=data["role"],
            params=dict(data["params"]),
            discards={d: np.asarray(v, dtype=np.int64) for d, v in data["discards"].items()},
            own={d: own(v) for d, v in data["own"].items()},
            announcements=_unnest_pairs(data["announcements"], np.int8),
            message_lists={
                d: {k: np.asarray(v, dtype=np.int64) for k, v in lists.items()}
                for d, lists in data["message_lists"].items()
            },
            links=_unnest_pairs(data["links"], np.int64),
            disclosed_settings=_unnest_pairs(data["disclosed_settings"], np.int8),
            messages=dict(data["messages"]),
            private=data.get("private", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "PartyView":
        return cls.from_dict(json.loads(text))


def _lookup(keys: np.ndarray, values: np.ndarray, query: np.ndarray, missing) -> np.ndarray:
    query = np.asarray(query, dtype=np.int64)
    out = np.full(query.size, missing, dtype=values.dtype)
    if keys.size == 0 or query.size == 0:
        return out
    pos = np.searchsorted(keys, query)
    pos = np.clip(pos, 0, keys.size - 1)
    hit = keys[pos] == query
    out[hit] = values[pos[hit]]
    return out


def _nested_pairs(tree: dict) -> dict:
    return {
        d: {k: [a.tolist(), b.tolist()] for k, (a, b) in sorted(inner.items())}
        for d, inner in sorted(tree.items())
    }


def _unnest_pairs(tree: dict, second_dtype) -> dict:
    return {
        d: {
            k: (np.asarray(a, dtype=np.int64), np.asarray(b, dtype=second_dtype))
            for k, (a, b) in inner.items()
        }
        for d, inner in tree.items()
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


ANNOUNCE_DTYPE = np.dtype(
    [("round", np.int32), ("position", np.int8), ("party", "U1"), ("slot", np.int64), ("outcome", np.int8)]
)

STAGES = ("distributed", "announced", "listed", "linked", "disclosed")


@dataclass
class Transcript:
    """Public record of one protocol instance, plus a private audit section.

    Stages advance per distributor in the order of ``STAGES``; every
    publishing method checks the stage first and raises ``ProtocolAbort``
    when called out of order.
    """

    params: dict
    stage: dict = field(default_factory=dict)
    discards: dict = field(default_factory=dict)
    announcements: dict = field(default_factory=dict)
    lists: dict = field(default_factory=dict)
    links: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)
    confirmations: list = field(default_factory=list)
    audit: dict = field(default_factory=dict)

    def _advance(self, distributor: str, required: str, to: str) -> None:
        current = self.stage.get(distributor)
        if current != required:
            raise ProtocolAbort(
                f"sub-protocol {distributor}: cannot move to '{to}' from '{current}' (needs '{required}')"
            )
        self.stage[distributor] = to

    def publish_discards(self, distributor: str, slots: np.ndarray) -> None:
        """R3, announced as the labels of the discarded qubits.

        Run ids never leave the distributor: a swap run's two surviving
        halves share one, so publishing them would expose the links early.
        """
        if distributor in self.stage:
            raise ProtocolAbort(f"sub-protocol {distributor} already distributed")
        self.stage[distributor] = "distributed"
        self.discards[distributor] = np.sort(np.asarray(slots, dtype=np.int64))

    def record_announcements(self, distributor: str, events: np.ndarray, phony: np.ndarray) -> None:
        self._advance(distributor, "distributed", "announced")
        self.announcements[distributor] = events
        self.audit.setdefault(distributor, {})["phony_slots"] = np.sort(phony)

    def publish_lists(self, distributor: str, message: np.ndarray, test: np.ndarray) -> None:
        self._advance(distributor, "announced", "listed")
        self.lists[distributor] = {"L": np.sort(message), "L1": np.sort(test)}

    def publish_links(self, distributor: str, links: dict, true_links: dict | None = None) -> None:
        if self.stage.get(distributor) in (None, "distributed"):
            raise ProtocolAbort(
                f"sub-protocol {distributor}: links may only be revealed after every outcome is announced"
            )
        self._advance(distributor, "listed", "linked")
        self.links[distributor] = links
        if true_links is not None:
            self.audit.setdefault(distributor, {})["true_links"] = true_links

    def disclose_settings(self, distributor: str, party: str, slots: np.ndarray, settings: np.ndarray) -> None:
        if self.stage.get(distributor) not in ("linked", "disclosed"):
            raise ProtocolAbort(f"sub-protocol {distributor}: settings are disclosed only after the links")
        self.stage[distributor] = "disclosed"
        order = np.argsort(slots)
        self.settings.setdefault(distributor, {})[party] = (
            np.asarray(slots, dtype=np.int64)[order],
            np.asarray(settings, dtype=np.int8)[order],
        )

    def record_confirmation(self, sender: str, receiver: str, bit: int) -> None:
        if any(self.stage.get(d) != "disclosed" for d in LIEUTENANTS):
            raise ProtocolAbort("confirmations are exchanged after both sub-protocols finish")
        self.confirmations.append((sender, receiver, int(bit)))

    # views of the public record -----------------------------------------

    def announced(self, distributor: str, party: str) -> tuple[np.ndarray, np.ndarray]:
        ev = self.announcements[distributor]
        mine = ev[ev["party"] == party]
        order = np.argsort(mine["slot"])
        return mine["slot"][order].astype(np.int64), mine["outcome"][order]

    # line-delimited serialization -----------------------------------------

    def to_records(self, verdicts: Iterable | None = None, include_audit: bool = True) -> list[dict]:
        recs: list[dict] = [{"type": "header", "params": _jsonable(self.params)}]
        for d in sorted(self.discards):
            recs.append({"type": "discards", "distributor": d, "R3": self.discards[d].tolist()})
        for d in sorted(self.announcements):
            for ev in self.announcements[d]:
                recs.append(
                    {
                        "type": "announce",
                        "distributor": d,
                        "round": int(ev["round"]),
                        "position": int(ev["position"]),
                        "party": str(ev["party"]),
                        "slot": int(ev["slot"]),
                        "outcome": int(ev["outcome"]),
                    }
                )
        for d in sorted(self.lists):
            recs.append(
                {
                    "type": "lists",
                    "distributor": d,
                    "L": self.lists[d]["L"].tolist(),
                    "L1": self.lists[d]["L1"].tolist(),
                }
            )
        for d in sorted(self.links):
            recs.append(
                {
                    "type": "links",
                    "distributor": d,
                    "links": {k: [a.tolist(), b.tolist()] for k, (a, b) in sorted(self.links[d].items())},
                }
            )
        for d in sorted(self.settings):
            for party in sorted(self.settings[d]):
                slots, sets = self.settings[d][party]
                recs.append(
                    {
                        "type": "settings",
                        "distributor": d,
                        "party": party,
                        "slots": slots.tolist(),
                        "settings": sets.tolist(),
                    }
                )
        for sender, receiver, bit in self.confirmations:
            recs.append({"type": "confirm", "sender": sender, "receiver": receiver, "bit": bit})
        if include_audit:
            recs.append({"type": "audit", "audit": _jsonable(self.audit)})
        for v in verdicts or ():
            recs.append({"type": "verdict", **v})
        return recs

    def to_jsonl(self, verdicts: Iterable | None = None, include_audit: bool = True) -> str:
        return "".join(
            json.dumps(r, separators=(",", ":")) + "\n" for r in self.to_records(verdicts, include_audit)
        )

    @classmethod
    def from_jsonl(cls, text: str) -> tuple["Transcript", list[dict]]:
        """Rebuild a transcript; returns it with any recorded verdict lines."""
        t: Transcript | None = None
        events: dict[str, list] = {}
        verdicts = []
        for line in text.splitlines():
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec["type"]
            if kind == "header":
                t = cls(params=rec["params"])
            elif kind == "discards":
                t.publish_discards(rec["distributor"], np.asarray(rec["R3"], dtype=np.int64))
            elif kind == "announce":
                events.setdefault(rec["distributor"], []).append(
                    (rec["round"], rec["position"], rec["party"], rec["slot"], rec["outcome"])
                )
            elif kind == "lists":
                d = rec["distributor"]
                if t.stage.get(d) == "distributed":
                    t.record_announcements(d, np.array(events.get(d, []), dtype=ANNOUNCE_DTYPE), np.array([]))
                t.publish_lists(d, np.asarray(rec["L"], dtype=np.int64), np.asarray(rec["L1"], dtype=np.int64))
            elif kind == "links":
                links = {
                    k: (np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
                    for k, (a, b) in rec["links"].items()
                }
                t.publish_links(rec["distributor"], links)
            elif kind == "settings":
                t.disclose_settings(
                    rec["distributor"],
                    rec["party"],
                    np.asarray(rec["slots"], dtype=np.int64),
                    np.asarray(rec["settings"], dtype=np.int8),
                )
            elif kind == "confirm":
                t.record_confirmation(rec["sender"], rec["receiver"], rec["bit"])
            elif kind == "audit":
                t.audit = rec["audit"]
            elif kind == "verdict":
                verdicts.append({k: v for k, v in rec.items() if k != "type"})
            else:
                raise ValueError(f"unknown record type {kind!r}")
        if t is None:
            raise ValueError("transcript has no header line")
        return t, verdicts

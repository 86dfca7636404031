"""Inference from the public record: message readings, pairwise Hardy tests, verdicts."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from .ledger import D, LIEUTENANTS, U, PartyView, ProtocolAbort, link_class, other

FALLBACK_BIT = 0
JOINT_LABELS = ("++", "+-", "-+", "--")


def wilson_interval(successes: int, trials: int, confidence: float = 0.99) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    z = norm.ppf(0.5 + confidence / 2)
    p = successes / trials
    denom = 1 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials))
    return max(0.0, center - half), min(1.0, center + half)


def forbidden(s1, s2, o1, o2) -> np.ndarray:
    """Events with zero probability on a genuine Hardy pair:
    (D,D,-,-), (D,U,+,+) and (U,D,+,+)."""
    s1, s2, o1, o2 = map(np.asarray, (s1, s2, o1, o2))
    both_minus_dd = (s1 == D) & (s2 == D) & (o1 == -1) & (o2 == -1)
    both_plus_mixed = (s1 != s2) & (o1 == 1) & (o2 == 1)
    return both_minus_dd | both_plus_mixed


@dataclass(frozen=True)
class MessageReading:
    value: int | None
    reason: str | None
    violations: tuple[int, int]  # forbidden events if C had used U, if C had used D
    runs_used: int

    @property
    def readable(self) -> bool:
        return self.value is not None

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "reason": self.reason,
            "violations": {"U": self.violations[0], "D": self.violations[1]},
            "runs_used": self.runs_used,
        }


def decide_reading(viol_u: int, viol_d: int, runs: int, k_min: int = 1) -> MessageReading:
    viol = (int(viol_u), int(viol_d))
    if runs == 0:
        return MessageReading(None, "no-runs", viol, 0)
    if viol_u > 0 and viol_d > 0:
        return MessageReading(None, "both-falsified", viol, runs)
    if viol_u == 0 and viol_d >= k_min:
        return MessageReading(0, None, viol, runs)
    if viol_d == 0 and viol_u >= k_min:
        return MessageReading(1, None, viol, runs)
    return MessageReading(None, "insufficient-evidence", viol, runs)


def _c_links(view: PartyView, distributor: str, reader: str) -> tuple[np.ndarray, np.ndarray]:
    if distributor not in view.links:
        raise ProtocolAbort(f"links of sub-protocol {distributor} are not revealed yet")
    if distributor not in view.message_lists:
        raise ProtocolAbort(f"C's lists for sub-protocol {distributor} are not known yet")
    # C sorts last, so the reader is always the first column
    return view.links[distributor].get(link_class(reader, "C"), (np.array([], int), np.array([], int)))


def read_message(view: PartyView, distributor: str, reader: str | None = None, k_min: int | None = None) -> MessageReading:
    """Which uniform C setting on the L-runs of ``distributor``'s sub-protocol is
    consistent with the reader's Hardy data? U reads as 0, D as 1."""
    reader = reader or view.role
    k_min = int(view.params.get("k_min", 1) if k_min is None else k_min)
    x, y = _c_links(view, distributor, reader)
    keep = np.isin(y, view.message_lists[distributor]["L"])
    x, y = x[keep], y[keep]
    s_r = view.settings_of(distributor, reader, x)
    o_r = view.outcomes_of(distributor, reader, x)
    o_c = view.outcomes_of(distributor, "C", y)
    ok = (s_r >= 0) & (o_r != 0) & (o_c != 0)
    s_r, o_r, o_c = s_r[ok], o_r[ok], o_c[ok]
    viol_u = int(forbidden(s_r, U, o_r, o_c).sum())
    viol_d = int(forbidden(s_r, D, o_r, o_c).sum())
    return decide_reading(viol_u, viol_d, int(ok.sum()), k_min)


@dataclass(frozen=True)
class HardyReport:
    status: str  # pass | fail | inconclusive
    runs: int
    counts: dict
    violations: dict
    q_hat: float | None
    q_interval: tuple[float, float]
    reasons: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    @property
    def failed(self) -> bool:
        return self.status == "fail"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["q_interval"] = list(self.q_interval)
        d["reasons"] = list(self.reasons)
        return d


def hardy_test(s1, s2, o1, o2, q: float, epsilon: float = 0.0, min_runs: int = 16) -> HardyReport:
    """Check the three zero conditions and the positivity of P(+,+|U,U) on joint data."""
    s1, s2, o1, o2 = (np.asarray(a) for a in (s1, s2, o1, o2))
    runs = int(s1.size)
    joint = np.where(o1 == 1, 0, 2) + np.where(o2 == 1, 0, 1)
    table = np.zeros((2, 2, 4), dtype=np.int64)
    np.add.at(table, (s1.astype(int), s2.astype(int), joint), 1)
    counts = {
        f"{'UD'[a]}{'UD'[b]}": {JOINT_LABELS[k]: int(table[a, b, k]) for k in range(4)}
        for a in (0, 1)
        for b in (0, 1)
    }
    violations = {
        "DD--": int(table[D, D, 3]),
        "DU++": int(table[D, U, 0]),
        "UD++": int(table[U, D, 0]),
    }
    n_uu = int(table[U, U].sum())
    q_hits = int(table[U, U, 0])
    q_hat = q_hits / n_uu if n_uu else None
    q_interval = wilson_interval(q_hits, n_uu)

    if runs < min_runs:
        return HardyReport("inconclusive", runs, counts, violations, q_hat, q_interval, ("too-few-runs",))
    reasons = []
    for cell, (a, b) in (("DD--", (D, D)), ("DU++", (D, U)), ("UD++", (U, D))):
        if violations[cell] > epsilon * table[a, b].sum():
            reasons.append(f"zero-condition {cell}")
    if n_uu * q >= 10 and q_hits == 0:
        reasons.append("no (+,+|U,U) events")
    status = "fail" if reasons else "pass"
    return HardyReport(status, runs, counts, violations, q_hat, q_interval, tuple(reasons))


def pair_reports(view: PartyView, distributor: str) -> dict[str, HardyReport]:
    """Hardy test for every revealed link class of one sub-protocol.

    C's message-run settings are never disclosed; for those runs the setting
    inferred by reading the same class is used, and they are left out when
    that class is unreadable.
    """
    p = view.params
    out = {}
    for cls, (x, y) in sorted(view.links.get(distributor, {}).items()):
        s_x = view.settings_of(distributor, cls[0], x)
        s_y = view.settings_of(distributor, cls[1], y)
        if cls[1] == "C":
            message = np.isin(y, view.message_lists[distributor]["L"])
            reading = read_message(view, distributor, reader=cls[0])
            s_y = np.where(message, reading.value if reading.readable else -1, s_y).astype(np.int8)
        o_x = view.outcomes_of(distributor, cls[0], x)
        o_y = view.outcomes_of(distributor, cls[1], y)
        ok = (s_x >= 0) & (s_y >= 0) & (o_x != 0) & (o_y != 0)
        out[cls] = hardy_test(
            s_x[ok], s_y[ok], o_x[ok], o_y[ok], p["q"], p.get("epsilon", 0.0), p.get("min_runs", 16)
        )
    return out


@dataclass(frozen=True)
class Verdict:
    actor: str
    action: int | None  # None = abstain
    traitor: str | None
    case: str
    peer_link_fault: bool = False
    invalid: bool = False
    evidence: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def decide(
    actor: str,
    own_reading: MessageReading,
    peer_reading: MessageReading,
    reports: dict,
    confirmation: int | None,
) -> Verdict:
    """Map one lieutenant's evidence to an action and an accusation.

    ``own_reading`` comes from the actor's own sub-protocol (it carries the
    peer's order), ``peer_reading`` from the peer's sub-protocol (the actor's
    order). ``reports`` is keyed by ``(distributor, link class)``;
    ``confirmation`` is the bit the peer claims to have received.
    """
    peer = other(actor)
    own_fail = sorted(cls for (d, cls), r in reports.items() if d == actor and r.failed)
    peer_fail = sorted(cls for (d, cls), r in reports.items() if d == peer and r.failed)
    inconclusive = sorted(f"{d}:{cls}" for (d, cls), r in reports.items() if r.status == "inconclusive")
    evidence = {
        "own_reading": own_reading.to_dict(),
        "peer_reading": peer_reading.to_dict(),
        "failed_own": own_fail,
        "failed_peer": peer_fail,
        "inconclusive": inconclusive,
        "confirmation": confirmation,
    }
    own_bit = own_reading.value if own_reading.readable else FALLBACK_BIT

    def verdict(action, traitor, case, **kw):
        return Verdict(actor, action, traitor, case, evidence=evidence, **kw)

    # the actor prepared these states honestly, so failures point at whoever announced them
    if link_class(actor, "C") in own_fail:
        return verdict(FALLBACK_BIT, "C", "commander-announcements")
    if link_class(actor, peer) in own_fail:
        return verdict(own_bit, peer, "peer-announcements")
    if peer_fail:
        return verdict(own_bit, peer, "peer-distribution")
    if own_fail:
        return verdict(None, None, "unattributed-failure", invalid=True)
    if inconclusive:
        return verdict(None, None, "inconclusive", invalid=True)
    if not (own_reading.readable and peer_reading.readable):
        return verdict(FALLBACK_BIT, "C", "unreadable")
    if own_reading.value != peer_reading.value:
        return verdict(FALLBACK_BIT, "C", "commander-equivocation")
    if confirmation is not None and confirmation != own_reading.value:
        return verdict(own_reading.value, peer, "confirmation-mismatch", peer_link_fault=True)
    return verdict(own_reading.value, None, "agreement")


def assess(view: PartyView) -> tuple[Verdict, dict, dict]:
    """Verdict of a lieutenant computed from its view alone."""
    actor = view.role
    if actor not in LIEUTENANTS:
        raise ValueError("only lieutenants reach verdicts")
    readings = {"own": read_message(view, actor), "peer": read_message(view, other(actor))}
    reports = {(d, cls): r for d in LIEUTENANTS for cls, r in pair_reports(view, d).items()}
    v = decide(actor, readings["own"], readings["peer"], reports, view.messages.get(other(actor)))
    return v, readings, reports


def verdict_from_view(view: PartyView) -> Verdict:
    return assess(view)[0]

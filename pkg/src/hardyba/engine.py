"""Protocol state machine for the three-general Hardy/swapping agreement scheme.

Each lieutenant X in {A, B} runs one sub-protocol: it shares 6N maximally
entangled pairs with each neighbour, converts 2N+2N of them into Hardy pairs
with an ancilla (keeping the ancilla-|u> outcomes) and swaps the remaining
4N pair-of-pairs into Hardy pairs between its peer and C (keeping clicks of
the swap projector). Sub-protocol X carries C's order to the *other*
lieutenant, so A's part transmits m_CB and B's part transmits m_CA.

Every strategy hook receives only the owning party's :class:`PartyView`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import verify
from .hardy import ALPHA_OPT, HardyModel, symmetric_model
from .ledger import (
    ANNOUNCE_DTYPE,
    CHI,
    LIEUTENANTS,
    PARTIES,
    PSI,
    ConfigurationError,
    OwnSlots,
    PartyView,
    RunKind,
    RunLedger,
    SlotKind,
    Transcript,
    other,
)

MIN_N = 8
PROB_FLOOR = 1e-14


@dataclass(frozen=True)
class ProtocolConfig:
    n: int = 256
    alpha: float = ALPHA_OPT
    message_bit: int = 1
    message_fraction: float = 0.75
    flip_prob: float = 0.0
    epsilon: float = 0.0
    k_min: int = 1
    min_runs: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.n < MIN_N:
            raise ConfigurationError(f"n must be at least {MIN_N}, got {self.n}")
        if not 0 < self.alpha < 1:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.message_bit not in (0, 1):
            raise ConfigurationError(f"message_bit must be 0 or 1, got {self.message_bit}")
        if not 0 < self.message_fraction < 1:
            raise ConfigurationError("message_fraction must lie in (0, 1)")
        for name in ("flip_prob", "epsilon"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigurationError(f"{name} must lie in [0, 1]")
        if self.k_min < 1 or self.min_runs < 1:
            raise ConfigurationError("k_min and min_runs must be positive")


class Strategy:
    """Honest behaviour at every decision point. Adversaries override hooks."""

    name = "honest"

    def swap_projectors(self, view: PartyView, n_swaps: int, rng: np.random.Generator) -> np.ndarray:
        """True where the distributor uses the cheat projector instead of M."""
        return np.zeros(n_swaps, dtype=bool)

    def choose_settings(self, view: PartyView, message_bit, fraction: float, rng: np.random.Generator) -> dict:
        return choose_settings(view, message_bit, fraction, rng)

    def intended_bits(self, message_bit: int) -> dict:
        """Commander only: the bit it encodes in each sub-protocol (None = no consistent bit)."""
        return {d: message_bit for d in LIEUTENANTS}

    def announce(self, view: PartyView, distributor: str, slots: np.ndarray, outcomes: np.ndarray, rng) -> np.ndarray:
        return outcomes

    def publish_links(self, view: PartyView, true_links: dict, rng) -> dict:
        return true_links

    def disclose_settings(self, view: PartyView, distributor: str, slots, settings, rng) -> np.ndarray:
        return settings

    def classical_message(self, view: PartyView, honest_bit: int, rng) -> int:
        return honest_bit


def _params(config: ProtocolConfig, model: HardyModel) -> dict:
    return {
        "n": config.n,
        "alpha": config.alpha,
        "q": model.q,
        "message_fraction": config.message_fraction,
        "epsilon": config.epsilon,
        "k_min": config.k_min,
        "min_runs": config.min_runs,
    }


def build_view(role: str, ledgers: dict[str, RunLedger], transcript: Transcript) -> PartyView:
    """Assemble ``role``'s knowledge from its own qubits and the public record so far."""
    view = PartyView(role=role, params=dict(transcript.params))
    for d, ledger in ledgers.items():
        if d not in transcript.discards:
            continue
        discarded = transcript.discards[d]
        view.discards[d] = discarded
        mine = (ledger.holders == role) & ~np.isin(ledger.slot_ids, discarded)
        idx = np.flatnonzero(mine)
        idx = idx[np.argsort(ledger.slot_ids[idx])]
        view.own[d] = OwnSlots(
            ledger.slot_ids[idx].astype(np.int64),
            ledger.settings[idx].copy(),
            ledger.outcomes[idx].copy(),
            ledger.c_message[idx].copy() if role == "C" else None,
        )
        if role == d:
            view.private[d] = {
                "true_links": ledger.true_links(),
                "consumed": np.sort(ledger.slot_ids[ledger.consumed & ledger.active]),
            }
        if transcript.stage.get(d) not in (None, "distributed"):
            view.announcements[d] = {p: transcript.announced(d, p) for p in PARTIES}
        if d in transcript.lists:
            view.message_lists[d] = dict(transcript.lists[d])
        if d in transcript.links:
            view.links[d] = dict(transcript.links[d])
        if d in transcript.settings:
            view.disclosed_settings[d] = dict(transcript.settings[d])
    for sender, receiver, bit in transcript.confirmations:
        if receiver == role:
            view.messages[sender] = bit
    return view


def distribute(
    distributor: str,
    n: int,
    model: HardyModel,
    rng: np.random.Generator,
    strategy: Strategy | None = None,
    transcript: Transcript | None = None,
) -> RunLedger:
    """Resource distribution with post-selection for one sub-protocol."""
    if distributor not in LIEUTENANTS:
        raise ConfigurationError(f"distributor must be A or B, got {distributor!r}")
    if n < MIN_N:
        raise ConfigurationError(f"n={n} is too small for the statistical phases (need >= {MIN_N})")
    strategy = strategy or Strategy()
    peer = other(distributor)
    n_conv, n_swap = 2 * n, 4 * n

    params = transcript.params if transcript is not None else {"n": n, "q": model.q}
    cheat = np.asarray(strategy.swap_projectors(PartyView(distributor, dict(params)), n_swap, rng), dtype=bool)
    if cheat.shape != (n_swap,):
        raise ValueError("swap_projectors must return one flag per swap")

    p_conv = model.conversion_branch[0]
    p_swap = model.swap_branches[False][0]
    p_cheat = model.swap_branches[True][0]
    run_kinds = np.concatenate(
        [
            np.full(n_conv, RunKind.CONVERT_PEER),
            np.full(n_conv, RunKind.CONVERT_COMMANDER),
            np.full(n_swap, RunKind.SWAP),
        ]
    ).astype(np.int8)
    p_keep = np.concatenate([np.full(2 * n_conv, p_conv), np.where(cheat, p_cheat, p_swap)])
    kept = rng.random(run_kinds.size) < p_keep
    run_ids = rng.permutation(run_kinds.size).astype(np.int64)
    run_cheat = np.concatenate([np.zeros(2 * n_conv, dtype=bool), cheat])

    conv = slice(0, 2 * n_conv)
    swap = slice(2 * n_conv, None)
    conv_partner = np.where(run_kinds[conv] == RunKind.CONVERT_PEER, peer, "C")

    # conversion runs: (distributor qubit, partner qubit)
    c_runs = np.arange(2 * n_conv)
    c_holders = np.stack([np.full(2 * n_conv, distributor), conv_partner], axis=1)
    c_kind = np.where(conv_partner == "C", SlotKind.DIRECT_TO_C, SlotKind.direct_to(peer))
    c_kinds = np.where(kept[conv], c_kind, SlotKind.DISCARDED)
    # swap runs: two consumed distributor qubits, then the peer's and C's halves
    s_runs = np.arange(2 * n_conv, run_kinds.size)
    s_holders = np.tile([distributor, distributor, peer, "C"], (n_swap, 1))
    s_kinds = np.where(kept[swap], SlotKind.SWAP_HALF, SlotKind.DISCARDED)

    holders = np.concatenate([c_holders.ravel(), s_holders.ravel()])
    slot_run_index = np.concatenate([np.repeat(c_runs, 2), np.repeat(s_runs, 4)])
    kinds = np.concatenate([np.repeat(c_kinds, 2), np.repeat(s_kinds, 4)]).astype(np.int8)
    consumed = np.concatenate([np.zeros(2 * 2 * n_conv, dtype=bool), np.tile([True, True, False, False], n_swap)])

    base_conv = 2 * np.flatnonzero(kept[conv])
    base_swap = 2 * 2 * n_conv + 4 * np.flatnonzero(kept[swap])
    pair_first = np.concatenate([base_conv, base_swap + 2])
    pair_second = np.concatenate([base_conv + 1, base_swap + 3])
    pair_state = np.concatenate(
        [np.full(base_conv.size, PSI), np.where(cheat[kept[swap]], CHI, PSI)]
    ).astype(np.int8)
    partner = np.full(holders.size, -1, dtype=np.int64)
    partner[pair_first] = pair_second
    partner[pair_second] = pair_first

    ledger = RunLedger(
        distributor=distributor,
        n_parameter=n,
        run_ids=run_ids,
        run_kinds=run_kinds,
        run_kept=kept,
        run_cheat=run_cheat,
        slot_ids=rng.permutation(holders.size).astype(np.int64),
        holders=holders.astype("U1"),
        slot_runs=run_ids[slot_run_index],
        kinds=kinds,
        consumed=consumed,
        partner=partner,
        pair_first=pair_first,
        pair_second=pair_second,
        pair_state=pair_state,
    )
    if transcript is not None:
        transcript.publish_discards(distributor, ledger.discarded_slots)
    return ledger


def choose_settings(view: PartyView, message_bit, fraction: float, rng: np.random.Generator) -> dict:
    """Honest setting choice for every held slot, per sub-protocol.

    Lieutenants pick U/D uniformly. The commander puts each slot in the
    message basis (U for 0, D for 1) with probability ``fraction`` and picks
    a uniform test setting otherwise. ``message_bit`` may be a per-sub-protocol
    mapping. Returns ``{distributor: (settings, message_mask or None)}``.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"message fraction must lie in (0, 1), got {fraction}")
    is_c = view.role == "C"
    if is_c == (message_bit is None):
        raise ValueError("a message bit is required for the commander and only for the commander")
    out = {}
    for d in sorted(view.own):
        k = view.own[d].slot_ids.size
        if not is_c:
            out[d] = (rng.integers(0, 2, size=k).astype(np.int8), None)
            continue
        bit = message_bit[d] if isinstance(message_bit, dict) else message_bit
        message = rng.random(k) < fraction
        test = rng.integers(0, 2, size=k).astype(np.int8)
        out[d] = (np.where(message, bit, test).astype(np.int8), message)
    return out


def _sampling_cdf(model: HardyModel) -> np.ndarray:
    tables = np.stack([model.tables["psi"].as_array(), model.tables["chi"].as_array()])
    # analytically forbidden cells must never be drawn through rounding
    tables[tables < PROB_FLOOR] = 0.0
    tables /= tables.sum(axis=-1, keepdims=True)
    cdf = np.cumsum(tables, axis=-1)
    cdf[..., -1] = 1.0
    return cdf


def sample_pairs(model: HardyModel, states, s1, s2, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Born-sample joint +-1 outcomes for Hardy-correlated pairs, vectorised."""
    cdf = _sampling_cdf(model)[states, s1, s2]
    u = rng.random(len(states))
    k = (u[:, None] >= cdf[:, :3]).sum(axis=1)
    o1 = np.where(k < 2, 1, -1).astype(np.int8)
    o2 = np.where(k % 2 == 0, 1, -1).astype(np.int8)
    return o1, o2


def measurement_phase(
    ledger: RunLedger,
    model: HardyModel,
    rng: np.random.Generator,
    transcript: Transcript,
    strategies: dict | None = None,
    ledgers: dict | None = None,
) -> Transcript:
    """Measure, announce (results only, never settings) and record every surviving slot.

    Each holder works through its qubits in its own random order; round ``t``
    holds every party's ``t``-th qubit and the parties in a round announce in
    a uniformly random order. The distributor announces uniform phony results
    for qubits consumed by swapping.
    """
    strategies = strategies or {}
    ledgers = ledgers or {ledger.distributor: ledger}
    active = ledger.active
    if np.any(ledger.settings[active & ~ledger.consumed] < 0):
        raise ConfigurationError("settings must be chosen before the measurement phase")

    i, j = ledger.pair_first, ledger.pair_second
    o1, o2 = sample_pairs(model, ledger.pair_state, ledger.settings[i], ledger.settings[j], rng)
    ledger.outcomes[i] = o1
    ledger.outcomes[j] = o2
    phony_mask = ledger.consumed & active
    ledger.outcomes[phony_mask] = rng.choice(np.array([-1, 1], dtype=np.int8), size=int(phony_mask.sum()))

    announced = ledger.outcomes.copy()
    for party in PARTIES:
        strat = strategies.get(party)
        if strat is None or type(strat).announce is Strategy.announce:
            continue
        mask = ledger.holder_mask(party)
        view = build_view(party, ledgers, transcript)
        order = np.argsort(ledger.slot_ids[mask])
        slots = ledger.slot_ids[mask][order]
        told = np.asarray(strat.announce(view, ledger.distributor, slots, ledger.outcomes[mask][order], rng))
        idx = np.flatnonzero(mask)[order]
        announced[idx] = np.where(told >= 0, 1, -1)

    idx = np.flatnonzero(active)
    rounds = np.empty(idx.size, dtype=np.int64)
    for party in PARTIES:
        sel = np.flatnonzero(ledger.holders[idx] == party)
        rounds[sel[rng.permutation(sel.size)]] = np.arange(sel.size)
    key = rng.random(idx.size)
    order = np.lexsort((key, rounds))
    rounds_sorted = rounds[order]
    starts = np.searchsorted(rounds_sorted, rounds_sorted, side="left")
    events = np.empty(idx.size, dtype=ANNOUNCE_DTYPE)
    events["round"] = rounds_sorted
    events["position"] = np.arange(idx.size) - starts
    events["party"] = ledger.holders[idx][order]
    events["slot"] = ledger.slot_ids[idx][order]
    events["outcome"] = announced[idx][order]
    transcript.record_announcements(ledger.distributor, events, ledger.slot_ids[phony_mask])
    return transcript


def disclose_lists_and_links(
    transcript: Transcript,
    ledgers: dict[str, RunLedger],
    strategies: dict | None = None,
    rng: np.random.Generator | None = None,
) -> dict[str, PartyView]:
    """C publishes L/L1 for each sub-protocol, then each distributor publishes its links."""
    strategies = strategies or {}
    rng = rng if rng is not None else np.random.default_rng(0)
    c_view = build_view("C", ledgers, transcript)
    for d in sorted(ledgers):
        own = c_view.own[d]
        transcript.publish_lists(d, own.slot_ids[own.message], own.slot_ids[~own.message])
    for d in sorted(ledgers):
        view = build_view(d, ledgers, transcript)
        true_links = ledgers[d].true_links()
        published = strategies.get(d, Strategy()).publish_links(view, true_links, rng)
        transcript.publish_links(d, published, true_links)
        ledgers[d].links_revealed = True
    return {p: build_view(p, ledgers, transcript) for p in PARTIES}


def disclose_settings(
    transcript: Transcript,
    ledgers: dict[str, RunLedger],
    strategies: dict | None = None,
    rng: np.random.Generator | None = None,
) -> None:
    """Verification phase: lieutenants reveal all settings, C only its test (L1) settings."""
    strategies = strategies or {}
    rng = rng if rng is not None else np.random.default_rng(0)
    for party in PARTIES:
        view = build_view(party, ledgers, transcript)
        strat = strategies.get(party, Strategy())
        for d in sorted(ledgers):
            own = view.own[d]
            keep = ~own.message if party == "C" else np.ones(own.slot_ids.size, dtype=bool)
            slots = own.slot_ids[keep]
            told = np.asarray(strat.disclose_settings(view, d, slots, own.settings[keep], rng), dtype=np.int8)
            transcript.disclose_settings(d, party, slots, told)


def exchange_confirmations(
    transcript: Transcript,
    ledgers: dict[str, RunLedger],
    strategies: dict | None,
    flip_prob: float,
    rng: np.random.Generator,
) -> dict[str, int]:
    """Each lieutenant tells the other which bit it received from C.

    The bit meant for X travels in the peer's sub-protocol, so X reports its
    reading of that one. ``flip_prob`` models a faulty classical link.
    """
    strategies = strategies or {}
    sent = {}
    for sender in LIEUTENANTS:
        view = build_view(sender, ledgers, transcript)
        reading = verify.read_message(view, other(sender))
        honest_bit = reading.value if reading.readable else verify.FALLBACK_BIT
        bit = int(strategies.get(sender, Strategy()).classical_message(view, honest_bit, rng))
        if rng.random() < flip_prob:
            bit ^= 1
        sent[f"m_{sender}{other(sender)}"] = bit
    for sender in LIEUTENANTS:
        transcript.record_confirmation(sender, other(sender), sent[f"m_{sender}{other(sender)}"])
    return sent


@dataclass
class ProtocolOutcome:
    config: ProtocolConfig
    model: HardyModel
    ledgers: dict
    transcript: Transcript
    views: dict
    readings: dict
    reports: dict
    verdicts: dict
    intended_bits: dict
    confirmations: dict = field(default_factory=dict)

    def verdict_records(self) -> list[dict]:
        return [self.verdicts[p].to_dict() for p in LIEUTENANTS]

    def summary(self) -> dict:
        return {
            "config": asdict(self.config),
            "intended_bits": self.intended_bits,
            "readings": {
                p: {k: r.to_dict() for k, r in sorted(v.items())} for p, v in sorted(self.readings.items())
            },
            "confirmations": self.confirmations,
            "verdicts": {p: v.to_dict() for p, v in sorted(self.verdicts.items())},
        }


def run_protocol(config: ProtocolConfig, strategies: dict | None = None) -> ProtocolOutcome:
    """Both sub-protocols, verification, confirmations and verdicts; deterministic in ``config.seed``."""
    strategies = {p: (strategies or {}).get(p) or Strategy() for p in PARTIES}
    rng = np.random.default_rng(config.seed)
    model = symmetric_model(config.alpha)
    transcript = Transcript(params=_params(config, model))

    ledgers = {d: distribute(d, config.n, model, rng, strategies[d], transcript) for d in LIEUTENANTS}

    for party in PARTIES:
        view = build_view(party, ledgers, transcript)
        bit = config.message_bit if party == "C" else None
        chosen = strategies[party].choose_settings(view, bit, config.message_fraction, rng)
        for d, (settings, message) in chosen.items():
            ledger = ledgers[d]
            own = view.own[d]
            idx = np.flatnonzero(ledger.holder_mask(party))
            idx = idx[np.argsort(ledger.slot_ids[idx])]
            assert np.array_equal(ledger.slot_ids[idx], own.slot_ids)
            ledger.settings[idx] = settings
            if party == "C":
                ledger.c_message[idx] = message

    for d in LIEUTENANTS:
        measurement_phase(ledgers[d], model, rng, transcript, strategies, ledgers)
    disclose_lists_and_links(transcript, ledgers, strategies, rng)
    disclose_settings(transcript, ledgers, strategies, rng)
    confirmations = exchange_confirmations(transcript, ledgers, strategies, config.flip_prob, rng)

    views = {p: build_view(p, ledgers, transcript) for p in PARTIES}
    readings, reports, verdicts = {}, {}, {}
    for p in LIEUTENANTS:
        verdicts[p], readings[p], reports[p] = verify.assess(views[p])
    return ProtocolOutcome(
        config=config,
        model=model,
        ledgers=ledgers,
        transcript=transcript,
        views=views,
        readings=readings,
        reports=reports,
        verdicts=verdicts,
        intended_bits=strategies["C"].intended_bits(config.message_bit),
        confirmations=confirmations,
    )

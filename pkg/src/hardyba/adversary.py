"""Cheating behaviours, each acting only through its own party's hooks."""

from __future__ import annotations

import numpy as np

from .engine import Strategy, choose_settings
from .ledger import LIEUTENANTS, ConfigurationError, PartyView, link_class, other


def honest() -> Strategy:
    return Strategy()


class CommanderTraitor(Strategy):
    """C trying to send inconsistent orders.

    ``mixed``: message-run settings in ``sub_protocol`` (``"A"``, ``"B"`` or
    ``"both"``) are drawn at random instead of being uniform.
    ``two_faced``: U throughout A's sub-protocol, D throughout B's.
    """

    def __init__(self, mode: str = "two_faced", sub_protocol: str = "A"):
        if mode not in ("mixed", "two_faced"):
            raise ConfigurationError(f"unknown commander mode {mode!r}")
        self.mode = mode
        self.targets = LIEUTENANTS if sub_protocol == "both" else (sub_protocol,)
        self.name = f"c_{mode}"

    def intended_bits(self, message_bit: int) -> dict:
        if self.mode == "two_faced":
            return {"A": 0, "B": 1}
        return {d: (None if d in self.targets else message_bit) for d in LIEUTENANTS}

    def choose_settings(self, view: PartyView, message_bit, fraction: float, rng) -> dict:
        if self.mode == "two_faced":
            return choose_settings(view, {"A": 0, "B": 1}, fraction, rng)
        chosen = choose_settings(view, message_bit, fraction, rng)
        for d in self.targets:
            settings, message = chosen[d]
            scrambled = rng.integers(0, 2, size=settings.size).astype(np.int8)
            chosen[d] = (np.where(message, scrambled, settings).astype(np.int8), message)
        return chosen


def traitor_c(mode: str = "two_faced", sub_protocol: str = "A") -> Strategy:
    return CommanderTraitor(mode, sub_protocol)


class BasisFlipDistributor(Strategy):
    """Swaps with the cheat projector, leaving the basis-flipped state between peer and C."""

    name = "basis_flip"

    def __init__(self, fraction: float = 1.0):
        if not 0 <= fraction <= 1:
            raise ConfigurationError("attack fraction must lie in [0, 1]")
        self.fraction = fraction

    def swap_projectors(self, view: PartyView, n_swaps: int, rng) -> np.ndarray:
        if self.fraction >= 1:
            return np.ones(n_swaps, dtype=bool)
        return rng.random(n_swaps) < self.fraction


def traitor_distributor_basis_flip(who: str, fraction: float = 1.0) -> Strategy:
    _check_lieutenant(who)
    return BasisFlipDistributor(fraction)


def derangement(size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random cyclic permutation (Sattolo); no element stays in place for size > 1."""
    perm = np.arange(size)
    for i in range(size - 1, 0, -1):
        j = int(rng.integers(0, i))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


class FakeLinksDistributor(Strategy):
    """Publishes a deranged map for the swapped peer-C pairs."""

    name = "fake_links"

    def publish_links(self, view: PartyView, true_links: dict, rng) -> dict:
        swapped = link_class(other(view.role), "C")
        x, y = true_links[swapped]
        faked = dict(true_links)
        faked[swapped] = (x.copy(), y[derangement(y.size, rng)])
        return faked


def traitor_distributor_fake_links(who: str) -> Strategy:
    _check_lieutenant(who)
    return FakeLinksDistributor()


class ClassicalLiar(Strategy):
    name = "liar"

    def classical_message(self, view: PartyView, honest_bit: int, rng) -> int:
        return 1 - honest_bit


def traitor_classical_liar(who: str) -> Strategy:
    _check_lieutenant(who)
    return ClassicalLiar()


def _check_lieutenant(who: str) -> None:
    if who not in LIEUTENANTS:
        raise ConfigurationError(f"only A or B can play this traitor, got {who!r}")


# scenario name -> (traitor, factory)
SCENARIOS = {
    "honest": (None, lambda: {}),
    "c_mixed": ("C", lambda: {"C": traitor_c("mixed")}),
    "c_two_faced": ("C", lambda: {"C": traitor_c("two_faced")}),
    "a_basis_flip": ("A", lambda: {"A": traitor_distributor_basis_flip("A")}),
    "b_basis_flip": ("B", lambda: {"B": traitor_distributor_basis_flip("B")}),
    "a_fake_links": ("A", lambda: {"A": traitor_distributor_fake_links("A")}),
    "b_fake_links": ("B", lambda: {"B": traitor_distributor_fake_links("B")}),
    "a_liar": ("A", lambda: {"A": traitor_classical_liar("A")}),
    "b_liar": ("B", lambda: {"B": traitor_classical_liar("B")}),
}


def strategies_for(scenario: str) -> tuple[tuple[str, ...], dict]:
    """Traitors and strategy map for a scenario name.

    Names may be joined with ``+`` to combine traitors; such multi-traitor runs
    are exploratory only.
    """
    traitors: list[str] = []
    strategies: dict = {}
    for part in scenario.split("+"):
        if part not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {part!r}; choose from {', '.join(SCENARIOS)}")
        traitor, factory = SCENARIOS[part]
        made = factory()
        if set(made) & set(strategies):
            raise ConfigurationError(f"scenario {scenario!r} assigns two strategies to one party")
        strategies.update(made)
        if traitor:
            traitors.append(traitor)
    return tuple(sorted(set(traitors))), strategies

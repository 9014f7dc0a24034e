"""Task environments: the four-deck gambling task and a delay discounting task.

Both are single-state problems. An environment exposes ``n_actions``,
``observe()`` (the context shown before a choice; None for the gambling task)
and ``step(action) -> TrialRecord``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import DECKS, TrialRecord

SCHEDULE_VERSION = 1


@dataclass(frozen=True)
class DeckSchedule:
    gain: int
    # (position within block, loss amount <= 0)
    losses: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class IgtPayoffSchedule:
    decks: tuple[DeckSchedule, DeckSchedule, DeckSchedule, DeckSchedule]
    block_length: int = 10

    def __post_init__(self):
        if len(self.decks) != 4:
            raise ValueError("schedule needs exactly four decks")
        for label, deck in zip(DECKS, self.decks):
            positions = [pos for pos, _ in deck.losses]
            if len(set(positions)) != len(positions):
                raise ValueError(f"deck {label}: duplicate loss positions")
            if any(not 0 <= pos < self.block_length for pos in positions):
                raise ValueError(f"deck {label}: loss position outside block")
            if any(amount > 0 for _, amount in deck.losses):
                raise ValueError(f"deck {label}: losses must be <= 0")
            if deck.gain < 0:
                raise ValueError(f"deck {label}: gain must be >= 0")
        # A and C lose often, B and D rarely; A and B lose money per block, C and D earn
        for label, deck, count, sign in zip(DECKS, self.decks, (5, 1, 5, 1), (-1, -1, 1, 1)):
            scaled = count * self.block_length // 10
            if len(deck.losses) != scaled:
                raise ValueError(f"deck {label}: expected {scaled} loss events per block, got {len(deck.losses)}")
            net = self.block_length * deck.gain + sum(amount for _, amount in deck.losses)
            if net * sign <= 0:
                kind = "negative" if sign < 0 else "positive"
                raise ValueError(f"deck {label}: net per block must be strictly {kind}, got {net}")

    @classmethod
    def classic(cls) -> "IgtPayoffSchedule":
        five = (2, 4, 6, 8, 9)
        return cls(
            decks=(
                DeckSchedule(100, tuple((p, -250) for p in five)),
                DeckSchedule(100, ((8, -1250),)),
                DeckSchedule(50, tuple((p, -50) for p in five)),
                DeckSchedule(50, ((9, -250),)),
            ),
            block_length=10,
        )

    def to_dict(self) -> dict:
        return {
            "version": SCHEDULE_VERSION,
            "block_length": self.block_length,
            "decks": {
                label: {
                    "gain": d.gain,
                    "losses": [[pos, amount] for pos, amount in d.losses],
                }
                for label, d in zip(DECKS, self.decks)
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "IgtPayoffSchedule":
        version = data.get("version", SCHEDULE_VERSION)
        if version != SCHEDULE_VERSION:
            raise ValueError(f"unsupported schedule version {version}")
        decks = []
        for label in DECKS:
            try:
                entry = data["decks"][label]
            except KeyError:
                raise ValueError(f"schedule is missing deck {label}") from None
            losses = tuple((int(pos), int(amount)) for pos, amount in entry["losses"])
            decks.append(DeckSchedule(int(entry["gain"]), losses))
        return cls(tuple(decks), int(data.get("block_length", 10)))


def load_schedule(path) -> IgtPayoffSchedule:
    with open(path) as fh:
        return IgtPayoffSchedule.from_dict(yaml.safe_load(fh))


def save_schedule(schedule: IgtPayoffSchedule, path) -> None:
    Path(path).write_text(yaml.safe_dump(schedule.to_dict(), sort_keys=False))


def igt_draw(schedule: IgtPayoffSchedule, deck: int, draw_count: int, layout=None) -> TrialRecord:
    """Payoff of the ``draw_count``-th pick from ``deck``.

    ``layout`` maps block position -> loss for the current block; the
    deterministic canonical layout is used when omitted.
    """
    if not 0 <= deck < 4:
        raise ValueError(f"invalid deck index {deck}")
    if draw_count < 0:
        raise ValueError("draw_count must be >= 0")
    d = schedule.decks[deck]
    if layout is None:
        layout = dict(d.losses)
    loss = layout.get(draw_count % schedule.block_length, 0)
    return TrialRecord(deck, d.gain, loss)


def igt_block_statistics(schedule: IgtPayoffSchedule) -> list[tuple[float, float]]:
    """Per deck: (loss frequency, expected net per block)."""
    out = []
    for d in schedule.decks:
        freq = len(d.losses) / schedule.block_length
        net = schedule.block_length * d.gain + sum(amount for _, amount in d.losses)
        out.append((freq, float(net)))
    return out


def as_seed_sequence(seed) -> np.random.SeedSequence:
    """A fresh SeedSequence; passing the same one twice yields the same streams."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key, pool_size=seed.pool_size)
    return np.random.SeedSequence(seed)


class IgtEnvironment:
    """Per-agent deck state machine.

    In shuffle mode each deck owns an independent random stream and permutes
    its loss positions once per block, so the payoff sequence of a deck never
    depends on which other decks were chosen.
    """

    n_actions = 4

    def __init__(self, schedule: IgtPayoffSchedule = None, seed=None, shuffle: bool = True):
        self.schedule = schedule or IgtPayoffSchedule.classic()
        self.shuffle = shuffle
        children = as_seed_sequence(seed).spawn(4)
        self._rngs = [np.random.default_rng(c) for c in children]
        self._layouts: list[list[dict]] = [[] for _ in range(4)]
        self.draw_counts = [0, 0, 0, 0]

    def _layout(self, deck: int, block: int) -> dict:
        layouts = self._layouts[deck]
        d = self.schedule.decks[deck]
        while len(layouts) <= block:
            if self.shuffle:
                positions = self._rngs[deck].permutation(self.schedule.block_length)
                amounts = [amount for _, amount in d.losses]
                layouts.append({int(positions[i]): amounts[i] for i in range(len(amounts))})
            else:
                layouts.append(dict(d.losses))
        return layouts[block]

    def observe(self):
        return None

    def step(self, action: int) -> TrialRecord:
        if not 0 <= action < 4:
            raise ValueError(f"invalid deck index {action}")
        count = self.draw_counts[action]
        layout = self._layout(action, count // self.schedule.block_length)
        self.draw_counts[action] += 1
        return igt_draw(self.schedule, action, count, layout)

    def payoff_table(self, n_draws: int) -> tuple[np.ndarray, np.ndarray]:
        """Gains and losses of the first ``n_draws`` picks of every deck, shape (4, n_draws).

        Uses the same per-deck streams as ``step`` so the two agree exactly.
        """
        gains = np.empty((4, n_draws))
        losses = np.empty((4, n_draws))
        for deck in range(4):
            d = self.schedule.decks[deck]
            for i in range(n_draws):
                layout = self._layout(deck, i // self.schedule.block_length)
                gains[deck, i] = d.gain
                losses[deck, i] = layout.get(i % self.schedule.block_length, 0)
        return gains, losses


@dataclass(frozen=True)
class DelayChoice:
    immediate_amount: float
    delayed_amount: float
    delay: float

    def __post_init__(self):
        if not self.delayed_amount > self.immediate_amount > 0:
            raise ValueError("need delayed_amount > immediate_amount > 0")
        if not self.delay > 0:
            raise ValueError("delay must be positive")


@dataclass
class DelayGrid:
    immediate: list = field(default_factory=lambda: [10, 20, 30, 40, 50])
    delayed: list = field(default_factory=lambda: [60, 70, 80, 90, 100])
    delays: list = field(default_factory=lambda: [7, 30, 90, 180])


def dd_generate_trials(grid: DelayGrid, rng) -> list[DelayChoice]:
    if not (grid.immediate and grid.delayed and grid.delays):
        raise ValueError("delay grid has an empty axis")
    if min(grid.delayed) <= max(grid.immediate):
        raise ValueError("degenerate grid: every delayed amount must exceed every immediate amount")
    trials = [
        DelayChoice(float(i), float(d), float(t))
        for i, d, t in itertools.product(grid.immediate, grid.delayed, grid.delays)
    ]
    order = np.random.default_rng(rng).permutation(len(trials))
    return [trials[i] for i in order]


class DelayEnvironment:
    """Two-option task: action 0 takes the immediate amount, action 1 the delayed one."""

    n_actions = 2

    def __init__(self, trials: list[DelayChoice]):
        if not trials:
            raise ValueError("no delay trials")
        self.trials = list(trials)
        self.t = 0

    def observe(self) -> DelayChoice:
        return self.trials[self.t % len(self.trials)]

    def step(self, action: int) -> TrialRecord:
        choice = self.observe()
        if action not in (0, 1):
            raise ValueError(f"invalid delay-task action {action}")
        self.t += 1
        amount = choice.immediate_amount if action == 0 else choice.delayed_amount
        return TrialRecord(action, amount, 0.0)

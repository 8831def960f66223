"""Configurations, instruction stacks, toppling orders and the stabilisation loop.

Two engines implement :func:`stabilize`.  The jitted one in
:mod:`ptopple.kernel` is used for plain runs; the pure-Python one below backs
traced runs, scripted stacks and cross-checks of the fast path.  Both consume
instruction ``odometer(x)`` of the stack at ``x`` when toppling ``x``, so on
the same stacks they reach the same final state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

import numpy as np

from . import kernel, rng
from .errors import (
    ArenaOverflow,
    InvariantViolation,
    NoTermination,
    SandpileError,
    ToppleStableSite,
)


class Instruction(enum.IntEnum):
    """A toppling instruction.  Bit 0 means "send left", bit 1 "send right"."""

    NONE = 0
    LEFT = 1
    RIGHT = 2
    BOTH = 3

    @classmethod
    def from_bits(cls, send_left: bool, send_right: bool) -> "Instruction":
        return cls(int(bool(send_left)) | (int(bool(send_right)) << 1))

    @property
    def sends_left(self) -> bool:
        return bool(self & 1)

    @property
    def sends_right(self) -> bool:
        return bool(self & 2)

    def probability(self, p):
        """Probability of this instruction under p-toppling (exact for ``Fraction`` p)."""
        q = 1 - p
        return (p if self.sends_left else q) * (p if self.sends_right else q)


class StackSource(Protocol):
    def instruction_at(self, site: int, index: int) -> Instruction: ...


@dataclass(frozen=True)
class InstructionSource:
    """Pseudorandom Diaconis-Fulton stacks, a pure function of ``(seed, site, index)``.

    The two send bits come from the two 32-bit halves of one keyed 64-bit word
    and are compared against ``threshold`` independently.
    """

    seed: int
    p: float
    _keys: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.seed <= rng.MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if not 0.0 < float(self.p) < 1.0:
            raise ValueError(f"p must lie in (0, 1), got {self.p!r}")

    @property
    def threshold(self) -> int:
        return rng.bernoulli_threshold(float(self.p))

    def site_key(self, site: int) -> int:
        key = self._keys.get(site)
        if key is None:
            key = self._keys[site] = rng.site_key(self.seed, site)
        return key

    def instruction_at(self, site: int, index: int) -> Instruction:
        if index < 0:
            raise ValueError("stack index must be non-negative")
        w = rng.stream_word(self.site_key(site), index)
        thr = self.threshold
        return Instruction.from_bits((w >> 32) < thr, (w & 0xFFFFFFFF) < thr)


def instruction_at(source: StackSource, site: int, index: int) -> Instruction:
    return source.instruction_at(site, index)


@dataclass
class ScriptedSource:
    """Explicit finite stacks, e.g. ``{0: [NONE, BOTH]}``; used to pin down examples.

    Reading past the end of a stack falls through to ``fallback`` (if any),
    keeping the index, otherwise raises ``IndexError``.
    """

    stacks: Mapping[int, Sequence[Instruction]]
    fallback: Optional[StackSource] = None

    def instruction_at(self, site: int, index: int) -> Instruction:
        stack = self.stacks.get(site, ())
        if index < len(stack):
            return Instruction(stack[index])
        if self.fallback is None:
            raise IndexError(f"stack at site {site} exhausted at index {index}")
        return self.fallback.instruction_at(site, index)


class PolicyKind(enum.Enum):
    LEFTMOST = "leftmost"
    FIFO_QUEUE = "fifo"
    RANDOM = "random"


@dataclass(frozen=True)
class TopplePolicy:
    kind: PolicyKind = PolicyKind.LEFTMOST
    seed: int = 0

    @classmethod
    def leftmost(cls) -> "TopplePolicy":
        return cls(PolicyKind.LEFTMOST)

    @classmethod
    def fifo(cls) -> "TopplePolicy":
        return cls(PolicyKind.FIFO_QUEUE)

    @classmethod
    def random(cls, seed: int = 0) -> "TopplePolicy":
        return cls(PolicyKind.RANDOM, seed)

    @classmethod
    def parse(cls, text: str) -> "TopplePolicy":
        """Parse ``leftmost``, ``fifo``, ``random`` or ``random:<seed>``."""
        name, _, seed = text.partition(":")
        kind = PolicyKind(name.strip().lower())
        return cls(kind, int(seed) if seed else 0)

    def run_seed(self, stack_seed: int) -> int:
        """Seed of the RANDOM order for one run on stacks seeded by ``stack_seed``."""
        return rng.policy_seed(stack_seed ^ self.seed)

    @property
    def code(self) -> int:
        return {
            PolicyKind.LEFTMOST: kernel.POLICY_LEFTMOST,
            PolicyKind.FIFO_QUEUE: kernel.POLICY_FIFO,
            PolicyKind.RANDOM: kernel.POLICY_RANDOM,
        }[self.kind]

    def __str__(self):
        if self.kind is PolicyKind.RANDOM:
            return f"random:{self.seed}"
        return self.kind.value


LEFTMOST = TopplePolicy.leftmost()


class Configuration:
    """Particle counts and odometer on the arena ``[-radius-1, radius+1]``.

    The two outermost cells are tripwires: toppling them raises
    :class:`ArenaOverflow`.  ``queued_at`` stamps the step at which each site
    last entered the FIFO queue (``-1`` when never queued); it is what makes
    FIFO selection a function of the configuration alone.
    """

    def __init__(self, radius: int):
        if radius < 0:
            raise ValueError("radius must be non-negative")
        self.radius = radius
        self.offset = radius + 1
        size = 2 * radius + 3
        self.counts = [0] * size
        self.odometer = [0] * size
        self.queued_at = [-1] * size
        self.n = 0
        self.step = 0

    @classmethod
    def single_source(cls, n: int) -> "Configuration":
        if n < 1:
            raise ValueError(f"n must be at least 1, got {n!r}")
        config = cls(n)
        config.counts[config.offset] = n
        config.n = n
        return config

    @classmethod
    def from_counts(cls, counts: Mapping[int, int], radius: Optional[int] = None) -> "Configuration":
        total = sum(counts.values())
        if radius is None:
            radius = max([total] + [abs(v) for v in counts])
        config = cls(radius)
        stamp = -len(config.counts)
        for site in sorted(counts):
            k = counts[site]
            if k < 0:
                raise ValueError("counts must be non-negative")
            config.counts[config.index(site)] = k
            if k >= 2:
                config.queued_at[config.index(site)] = stamp
                stamp += 1
        config.n = total
        return config

    def index(self, site: int) -> int:
        i = site + self.offset
        if not 0 <= i < len(self.counts):
            raise ArenaOverflow(f"site {site} lies outside the arena [-{self.offset}, {self.offset}]")
        return i

    @property
    def lo(self) -> int:
        return -self.offset

    @property
    def hi(self) -> int:
        return self.offset

    def __getitem__(self, site: int) -> int:
        i = site + self.offset
        return self.counts[i] if 0 <= i < len(self.counts) else 0

    def odometer_at(self, site: int) -> int:
        i = site + self.offset
        return self.odometer[i] if 0 <= i < len(self.odometer) else 0

    def unstable_sites(self) -> list:
        return [i - self.offset for i, k in enumerate(self.counts) if k >= 2]

    def is_stable(self) -> bool:
        return all(k < 2 for k in self.counts)

    def total(self) -> int:
        return sum(self.counts)

    def occupied(self) -> dict:
        return {i - self.offset: k for i, k in enumerate(self.counts) if k}

    def odometer_map(self) -> dict:
        return {i - self.offset: u for i, u in enumerate(self.odometer) if u}

    def toppled_vacancy_pairs(self) -> list:
        """Adjacent pairs ``(v, v+1)`` that are both vacant with positive odometer."""
        c, u = self.counts, self.odometer
        return [
            (i - self.offset, i + 1 - self.offset)
            for i in range(len(c) - 1)
            if c[i] == 0 and c[i + 1] == 0 and u[i] > 0 and u[i + 1] > 0
        ]

    def copy(self) -> "Configuration":
        other = Configuration(self.radius)
        other.counts = list(self.counts)
        other.odometer = list(self.odometer)
        other.queued_at = list(self.queued_at)
        other.n = self.n
        other.step = self.step
        return other

    def __repr__(self):
        return f"Configuration(n={self.n}, step={self.step}, counts={self.occupied()})"


def topple(config: Configuration, site: int, instr: Instruction) -> Configuration:
    """Apply ``instr`` at ``site`` in place and return ``config``.

    The odometer at ``site`` and the step counter both advance by one, NONE
    included.
    """
    i = config.index(site)
    if i == 0 or i == len(config.counts) - 1:
        raise ArenaOverflow(f"toppling at arena boundary cell {site}")
    c = config.counts
    if c[i] < 2:
        raise ToppleStableSite(f"site {site} holds {c[i]} particle(s)")
    before = (c[i - 1], c[i + 1])
    instr = Instruction(instr)
    if instr.sends_left:
        c[i] -= 1
        c[i - 1] += 1
    if instr.sends_right:
        c[i] -= 1
        c[i + 1] += 1
    config.odometer[i] += 1
    stamp = 3 * config.step
    # mirror the kernel's FIFO queue: neighbours that just became unstable are
    # appended in site order, the toppled site re-enters if still unstable
    if c[i - 1] >= 2 and before[0] < 2:
        config.queued_at[i - 1] = stamp
    if c[i] >= 2:
        config.queued_at[i] = stamp + 1
    if c[i + 1] >= 2 and before[1] < 2:
        config.queued_at[i + 1] = stamp + 2
    config.step += 1
    return config


def increments(instr: Instruction, site: int) -> tuple:
    """Change ``(dM, dS)`` of the centre and square centre of mass for ``instr`` at ``site``."""
    dm = ds = 0
    if instr.sends_left:
        dm -= 1
        ds += 1 - 2 * site
    if instr.sends_right:
        dm += 1
        ds += 1 + 2 * site
    return dm, ds


def select_next(policy: TopplePolicy, config: Configuration) -> Optional[int]:
    """Site to topple next under ``policy``, or ``None`` if ``config`` is stable.

    RANDOM draws from the unstable sites in increasing order using
    ``policy.seed`` (taken as the per-run seed) and the current step.
    """
    unstable = config.unstable_sites()
    if not unstable:
        return None
    if policy.kind is PolicyKind.LEFTMOST:
        return unstable[0]
    if policy.kind is PolicyKind.FIFO_QUEUE:
        q = config.queued_at
        return min(unstable, key=lambda v: (q[v + config.offset], v))
    r = rng.mix64(policy.seed + (config.step + 1) * rng.GOLDEN)
    return unstable[r % len(unstable)]


@dataclass
class Trace:
    center_of_mass: list
    square_center_of_mass: list


@dataclass
class StabilizationOutcome:
    n: int
    left: int
    right: int
    hole: Optional[int]
    topplings: int
    center_of_mass: int
    square_center_of_mass: int
    final_counts: dict
    odometer: dict
    trace: Optional[Trace] = None

    @property
    def hole_present(self) -> bool:
        return self.hole is not None

    @property
    def width(self) -> int:
        return self.right - self.left


def default_cap(n: int, p: float) -> int:
    """100 times the mean bound ``n**3 / (2p)`` on the number of topplings."""
    return math.ceil(100 * n**3 / (2 * float(p)))


def _build_outcome(n, final_counts, odometer, k, m, s, trace=None) -> StabilizationOutcome:
    from .observables import boundaries, center_of_mass, find_hole, square_center_of_mass

    left, right = boundaries(final_counts)
    hole = find_hole(final_counts, left, right)
    m_final = center_of_mass(final_counts)
    s_final = square_center_of_mass(final_counts)
    if (m_final, s_final) != (m, s):
        raise InvariantViolation(
            f"incremental (M, S) = {(m, s)} disagrees with final configuration {(m_final, s_final)}"
        )
    if sum(final_counts.values()) != n or any(k_ > 1 for k_ in final_counts.values()):
        raise InvariantViolation("final configuration is not a stable arrangement of n particles")
    if right - left + 1 != n + (hole is not None):
        raise InvariantViolation(f"width {right - left} inconsistent with n={n}, hole={hole}")
    return StabilizationOutcome(n, left, right, hole, k, m, s, final_counts, odometer, trace)


_STATUS = {
    kernel.ARENA_OVERFLOW: ArenaOverflow,
    kernel.NO_TERMINATION: NoTermination,
    kernel.ADJACENT_HOLES: InvariantViolation,
    kernel.BAD_FINAL_STATE: InvariantViolation,
    kernel.OBSERVABLE_MISMATCH: InvariantViolation,
}


def status_error(status: int, detail: str = "") -> SandpileError:
    names = {
        kernel.ARENA_OVERFLOW: "toppling reached an arena boundary cell",
        kernel.NO_TERMINATION: "toppling cap exceeded",
        kernel.ADJACENT_HOLES: "two adjacent toppled vacancies",
        kernel.BAD_FINAL_STATE: "final configuration violates stability/hole/width invariants",
        kernel.OBSERVABLE_MISMATCH: "incremental M or S disagrees with final configuration",
    }
    return _STATUS[status](f"{names[status]}{detail}")


def _stabilize_fast(n, source: InstructionSource, policy, cap) -> StabilizationOutcome:
    size = 2 * n + 3
    counts = np.zeros(size, dtype=np.int64)
    odo = np.zeros(size, dtype=np.int64)
    state = np.zeros(3, dtype=np.int64)
    seed = np.uint64(source.seed)
    thr = np.uint64(source.threshold)
    if policy.kind is PolicyKind.LEFTMOST:
        status = kernel.stabilize_leftmost(n, seed, thr, np.int64(cap), counts, odo, state)
    else:
        pseed = np.uint64(policy.run_seed(source.seed))
        status = kernel.stabilize_ordered(
            n, seed, thr, np.int64(cap), policy.code, pseed, counts, odo, state
        )
    if status != kernel.OK:
        raise status_error(status, f" (n={n}, seed={source.seed})")
    final = {i - (n + 1): int(k) for i, k in enumerate(counts) if k}
    odometer = {i - (n + 1): int(u) for i, u in enumerate(odo) if u}
    k, m, s = (int(x) for x in state)
    return _build_outcome(n, final, odometer, k, m, s)


def stabilize_reference(
    n: int,
    source: StackSource,
    policy: TopplePolicy = LEFTMOST,
    trace: bool = False,
    cap: Optional[int] = None,
    check_every_step: Optional[bool] = None,
) -> StabilizationOutcome:
    """Pure-Python stabilisation of ``n`` particles at the origin.

    With ``check_every_step`` (default: on when tracing) conservation and the
    no-adjacent-toppled-vacancies property are verified by a full scan after
    every toppling.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n!r}")
    if cap is None:
        cap = default_cap(n, getattr(source, "p", 0.5))
    if check_every_step is None:
        check_every_step = trace
    run_policy = policy
    if policy.kind is PolicyKind.RANDOM and isinstance(source, InstructionSource):
        run_policy = TopplePolicy(PolicyKind.RANDOM, policy.run_seed(source.seed))
    config = Configuration.single_source(n)
    m = s = 0
    ms, ss = ([0], [0]) if trace else (None, None)
    while True:
        site = select_next(run_policy, config)
        if site is None:
            break
        if config.step >= cap:
            raise NoTermination(f"more than {cap} topplings (n={n})")
        instr = source.instruction_at(site, config.odometer_at(site))
        topple(config, site, instr)
        dm, ds = increments(instr, site)
        m += dm
        s += ds
        if abs(dm) > 1:
            raise InvariantViolation(f"|dM| = {abs(dm)} at step {config.step}")
        i = site + config.offset
        if config.counts[i] == 0:
            for j in (i - 1, i + 1):
                if config.counts[j] == 0 and config.odometer[j] > 0:
                    raise InvariantViolation(f"adjacent toppled vacancies at sites {site}, {j - config.offset}")
        if check_every_step:
            if config.total() != n:
                raise InvariantViolation(f"particle count {config.total()} != {n} at step {config.step}")
            pairs = config.toppled_vacancy_pairs()
            if pairs:
                raise InvariantViolation(f"adjacent toppled vacancies {pairs} at step {config.step}")
        if trace:
            ms.append(m)
            ss.append(s)
    tr = Trace(ms, ss) if trace else None
    return _build_outcome(n, config.occupied(), config.odometer_map(), config.step, m, s, tr)


def stabilize(
    n: int,
    source: StackSource,
    policy: TopplePolicy = LEFTMOST,
    trace: bool = False,
    cap: Optional[int] = None,
    engine: str = "auto",
) -> StabilizationOutcome:
    """Stabilise ``n`` particles placed at the origin.

    ``engine="auto"`` uses the jitted kernel unless a trace is requested or the
    stacks are not an :class:`InstructionSource`; ``"python"`` and ``"fast"``
    force one side.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n!r}")
    if cap is None:
        cap = default_cap(n, getattr(source, "p", 0.5))
    fast_ok = isinstance(source, InstructionSource) and not trace
    if engine == "fast" and not fast_ok:
        raise ValueError("the fast engine needs an InstructionSource and no trace")
    if engine == "fast" or (engine == "auto" and fast_ok):
        return _stabilize_fast(n, source, policy, cap)
    return stabilize_reference(n, source, policy, trace=trace, cap=cap)

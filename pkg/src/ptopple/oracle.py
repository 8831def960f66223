"""Exact law of the final configuration for small n.

The stabilisation of ``n`` particles at the origin is a finite absorbing
Markov chain on configurations.  We enumerate it breadth-first, collapse the
self-loops (a NONE toppling under LEFTMOST leaves the state unchanged) and
solve for the expected number of visits to every transient state with exact
rational Gaussian elimination.  Absorption probabilities and the expected
number of raw topplings follow from those visit counts.

States are tuples of counts over ``[-n, n]``; under FIFO order the pending
queue is part of the state, since the next toppled site depends on it.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .core import Instruction, PolicyKind, TopplePolicy, LEFTMOST
from .errors import InvariantViolation, SingularSystem, StateLimitExceeded

N_MAX = 6
STATE_LIMIT = 20000


def parse_probability(p) -> Fraction:
    """Exact probability from a Fraction, an ``"a/b"`` string or a decimal string."""
    q = Fraction(p) if not isinstance(p, float) else Fraction(str(p))
    if not 0 < q < 1:
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    return q


@dataclass
class ChainStructure:
    n: int
    policy: TopplePolicy
    states: list
    index: dict
    # transient state -> list of (Instruction, successor index); NONE included
    moves: dict
    absorbing: list

    @property
    def transient(self) -> list:
        return [i for i in range(len(self.states)) if i in self.moves]

    def counts(self, i: int) -> tuple:
        s = self.states[i]
        return s[0] if self.policy.kind is PolicyKind.FIFO_QUEUE else s


def enumerate_states(n: int, policy: TopplePolicy = LEFTMOST, n_max: int = N_MAX,
                     state_limit: int = STATE_LIMIT) -> ChainStructure:
    """Breadth-first closure of the reachable states from ``n`` particles at the origin."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if n > n_max:
        raise StateLimitExceeded(f"n={n} exceeds n_max={n_max}")
    if policy.kind not in (PolicyKind.LEFTMOST, PolicyKind.FIFO_QUEUE):
        raise ValueError("exact enumeration supports LEFTMOST and FIFO orders")
    fifo = policy.kind is PolicyKind.FIFO_QUEUE
    width = 2 * n + 1
    origin = n
    counts0 = tuple(n if i == origin else 0 for i in range(width))
    start = (counts0, (origin,) if n >= 2 else ()) if fifo else counts0
    states = [start]
    index = {start: 0}
    moves = {}
    absorbing = []
    i = 0
    while i < len(states):
        state = states[i]
        counts, queue = state if fifo else (state, None)
        if fifo:
            x = queue[0] if queue else None
        else:
            x = next((j for j, k in enumerate(counts) if k >= 2), None)
        if x is None:
            absorbing.append(i)
            i += 1
            continue
        if x == 0 or x == width - 1:
            raise InvariantViolation(f"toppling at |site| = {n} would leave [-n, n]")
        out = []
        for instr in Instruction:
            c = list(counts)
            if instr.sends_left:
                c[x] -= 1
                c[x - 1] += 1
            if instr.sends_right:
                c[x] -= 1
                c[x + 1] += 1
            if fifo:
                q = list(queue[1:])
                for d in (x - 1, x, x + 1):
                    if c[d] >= 2 and d not in q:
                        q.append(d)
                nxt = (tuple(c), tuple(q))
            else:
                nxt = tuple(c)
            j = index.get(nxt)
            if j is None:
                if len(states) >= state_limit:
                    raise StateLimitExceeded(f"more than {state_limit} states at n={n}")
                j = index[nxt] = len(states)
                states.append(nxt)
            out.append((instr, j))
        moves[i] = out
        i += 1
    return ChainStructure(n, policy, states, index, moves, absorbing)


def solve_sparse(rows: list, rhs: list) -> list:
    """Solve ``A y = b`` exactly; ``rows[r]`` is a ``{column: Fraction}`` dict.

    Forward elimination column by column, choosing as pivot the remaining row
    whose entry in that column has the largest magnitude, then back substitution.
    """
    size = len(rows)
    rows = [dict(r) for r in rows]
    rhs = list(rhs)
    col_rows = defaultdict(set)
    for r, row in enumerate(rows):
        for c in row:
            col_rows[c].add(r)
    pivot_of = {}
    done = set()
    for c in range(size):
        candidates = [r for r in col_rows[c] if r not in done and rows[r].get(c, 0) != 0]
        if not candidates:
            raise SingularSystem(f"no pivot for column {c}")
        piv = max(candidates, key=lambda r: (abs(rows[r][c]), -r))
        done.add(piv)
        pivot_of[c] = piv
        prow = rows[piv]
        pval = prow[c]
        for r in candidates:
            if r == piv:
                continue
            row = rows[r]
            f = row[c] / pval
            for cc, v in prow.items():
                nv = row.get(cc, 0) - f * v
                if nv == 0:
                    if cc in row:
                        del row[cc]
                        col_rows[cc].discard(r)
                else:
                    if cc not in row:
                        col_rows[cc].add(r)
                    row[cc] = nv
            rhs[r] -= f * rhs[piv]
    y = [Fraction(0)] * size
    for c in reversed(range(size)):
        piv = pivot_of[c]
        row = rows[piv]
        acc = rhs[piv]
        for cc, v in row.items():
            if cc != c:
                acc -= v * y[cc]
        y[c] = acc / row[c]
    return y


@dataclass
class ExactDistribution:
    n: int
    p: Fraction
    policy: str
    support: dict
    expected_topplings: Fraction
    n_states: int
    n_transient: int
    moments: dict = field(default_factory=dict)

    @property
    def total_probability(self) -> Fraction:
        return sum(self.support.values(), Fraction(0))

    def sites(self) -> range:
        return range(-self.n, self.n + 1)

    def to_json(self, header: Optional[dict] = None) -> str:
        def frac(q):
            return [str(q.numerator), str(q.denominator)]

        m = marginals(self)
        body = {
            "header": header or {},
            "n": self.n,
            "p": frac(self.p),
            "policy": self.policy,
            "n_states": self.n_states,
            "n_transient": self.n_transient,
            "expected_topplings": frac(self.expected_topplings),
            "moments": {k: frac(v) for k, v in self.moments.items()},
            "support": [
                {"occupied": _occupied(state, self.n), "probability": frac(q)}
                for state, q in sorted(self.support.items(), key=lambda kv: _occupied(kv[0], self.n))
            ],
            "lrh": [
                {"L": l, "R": r, "hole": h, "probability": frac(q)}
                for (l, r, h), q in sorted(m["lrh"].items(), key=lambda kv: _lrh_key(kv[0]))
            ],
        }
        return json.dumps(body, indent=2)


def _lrh_key(key):
    l, r, h = key
    return (l, r, -10**9 if h is None else h)


def _occupied(state: tuple, n: int) -> list:
    return [i - n for i, k in enumerate(state) if k]


def lrh(state: tuple, n: int) -> tuple:
    """``(L, R, hole)`` of a stable state tuple; ``hole`` is ``None`` when absent."""
    occ = _occupied(state, n)
    left, right = occ[0], occ[-1]
    vacant = [v for v in range(left, right + 1) if state[v + n] == 0]
    if len(vacant) > 1:
        raise InvariantViolation(f"stable state {occ} has {len(vacant)} interior vacancies")
    return left, right, (vacant[0] if vacant else None)


def absorption_distribution(n: int, p, policy: TopplePolicy = LEFTMOST,
                            n_max: int = N_MAX) -> ExactDistribution:
    p = parse_probability(p)
    chain = enumerate_states(n, policy, n_max=n_max)
    transient = chain.transient
    col = {s: c for c, s in enumerate(transient)}
    absorbing_set = set(chain.absorbing)

    # collapse self-loops: a state left with probability 1 - q takes 1/(1 - q)
    # raw topplings per effective visit on average
    eff = {}
    stay = {}
    for s in transient:
        loop = Fraction(0)
        out = defaultdict(Fraction)
        for instr, j in chain.moves[s]:
            w = instr.probability(p)
            if j == s:
                loop += w
            else:
                out[j] += w
        leave = 1 - loop
        eff[s] = {j: w / leave for j, w in out.items()}
        stay[s] = 1 / leave

    support = defaultdict(Fraction)
    if not transient:
        support[chain.counts(0)] = Fraction(1)
        expected = Fraction(0)
    else:
        # expected visits y solve (I - Q)^T y = e_start
        rows = [{c: Fraction(1)} for c in range(len(transient))]
        for s in transient:
            for j, w in eff[s].items():
                if j in col:
                    r = rows[col[j]]
                    r[col[s]] = r.get(col[s], 0) - w
                    if r[col[s]] == 0:
                        del r[col[s]]
        rhs = [Fraction(0)] * len(transient)
        rhs[col[0]] = Fraction(1)
        visits = solve_sparse(rows, rhs)
        expected = sum((visits[col[s]] * stay[s] for s in transient), Fraction(0))
        for s in transient:
            y = visits[col[s]]
            for j, w in eff[s].items():
                if j in absorbing_set:
                    support[chain.counts(j)] += y * w

    dist = ExactDistribution(
        n=n,
        p=p,
        policy=str(policy),
        support=dict(support),
        expected_topplings=expected,
        n_states=len(chain.states),
        n_transient=len(transient),
    )
    em = es = em2 = Fraction(0)
    for state, q in dist.support.items():
        m = sum((i - n) * k for i, k in enumerate(state))
        s = sum((i - n) ** 2 * k for i, k in enumerate(state))
        em += q * m
        em2 += q * m * m
        es += q * s
    dist.moments = {"E[M]": em, "E[M^2]": em2, "E[S]": es, "E[K]": expected}
    return dist


def marginals(dist: ExactDistribution) -> dict:
    """Exact laws of L, R, hole and the joint ``(L, R, hole)``, plus E[K] and E[S]."""
    left = defaultdict(Fraction)
    right = defaultdict(Fraction)
    hole = defaultdict(Fraction)
    joint = defaultdict(Fraction)
    for state, q in dist.support.items():
        l, r, h = lrh(state, dist.n)
        left[l] += q
        right[r] += q
        hole[h] += q
        joint[(l, r, h)] += q
    return {
        "left": dict(left),
        "right": dict(right),
        "hole": dict(hole),
        "hole_present": 1 - hole.get(None, Fraction(0)),
        "lrh": dict(joint),
        "expected_topplings": dist.expected_topplings,
        "expected_S": dist.moments["E[S]"],
    }


def mirror(state: tuple) -> tuple:
    return tuple(reversed(state))

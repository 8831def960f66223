from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from ptopple.core import (
    Configuration,
    Instruction,
    InstructionSource,
    ScriptedSource,
    TopplePolicy,
    increments,
    select_next,
    stabilize,
    stabilize_reference,
    topple,
)
from ptopple.errors import ArenaOverflow, NoTermination, ToppleStableSite
from ptopple.observables import center_of_mass, square_center_of_mass

NONE, LEFT, RIGHT, BOTH = Instruction
POLICIES = (TopplePolicy.leftmost(), TopplePolicy.fifo(), TopplePolicy.random(3))

seeds = st.integers(0, 2**64 - 1)
probs = st.floats(0.05, 0.95)
fractions = st.fractions(min_value=Fraction(1, 1000), max_value=Fraction(999, 1000))


# -- instructions ------------------------------------------------------------

@given(fractions)
def test_instruction_law_sums_to_one(p):
    assert sum(i.probability(p) for i in Instruction) == 1
    assert LEFT.probability(p) == RIGHT.probability(p) == p * (1 - p)
    assert BOTH.probability(p) == p * p


def test_instruction_bits():
    assert Instruction.from_bits(True, False) is LEFT
    assert Instruction.from_bits(False, True) is RIGHT
    assert BOTH.sends_left and BOTH.sends_right
    assert not NONE.sends_left and not NONE.sends_right


# -- topple ------------------------------------------------------------------

def test_topple_left_at_origin():
    c = topple(Configuration.from_counts({0: 2}, radius=2), 0, LEFT)
    assert c.occupied() == {-1: 1, 0: 1}
    assert c.odometer_map() == {0: 1}
    assert c.step == 1


def test_topple_none_counts_as_a_toppling():
    c = topple(Configuration.from_counts({0: 3}, radius=3), 0, NONE)
    assert c.occupied() == {0: 3}
    assert c.odometer_at(0) == 1


def test_topple_both_from_three():
    c = topple(Configuration.from_counts({0: 3}, radius=3), 0, BOTH)
    assert c.occupied() == {-1: 1, 0: 1, 1: 1}


def test_topple_stable_site_raises():
    with pytest.raises(ToppleStableSite):
        topple(Configuration.from_counts({0: 1}, radius=2), 0, LEFT)
    with pytest.raises(ToppleStableSite):
        topple(Configuration.from_counts({0: 2}, radius=2), 1, LEFT)


def test_topple_on_tripwire_raises():
    c = Configuration.from_counts({0: 2}, radius=0)
    c.counts[0] = 2
    with pytest.raises(ArenaOverflow):
        topple(c, -1, LEFT)
    with pytest.raises(ArenaOverflow):
        topple(c, 5, LEFT)


@given(st.integers(-40, 40), st.sampled_from(list(Instruction)), st.integers(2, 5))
def test_increments_match_recomputed_moments(site, instr, k):
    c = Configuration.from_counts({site: k}, radius=abs(site) + 1)
    m0, s0 = center_of_mass(c), square_center_of_mass(c)
    topple(c, site, instr)
    assert increments(instr, site) == (center_of_mass(c) - m0, square_center_of_mass(c) - s0)
    assert c.total() == k


@given(st.integers(-40, 40), fractions)
def test_exact_per_toppling_expectations(site, p):
    em = em2 = es = Fraction(0)
    for instr in Instruction:
        dm, ds = increments(instr, site)
        w = instr.probability(p)
        em, em2, es = em + w * dm, em2 + w * dm * dm, es + w * ds
    assert (em, em2, es) == (0, 2 * p * (1 - p), 2 * p)


# -- policies ----------------------------------------------------------------

def test_select_next_examples():
    c = Configuration.from_counts({-2: 2, 0: 1, 3: 2}, radius=5)
    assert select_next(TopplePolicy.leftmost(), c) == -2
    assert select_next(TopplePolicy.fifo(), c) == -2
    assert select_next(TopplePolicy.random(0), c) in (-2, 3)
    assert select_next(TopplePolicy.leftmost(), Configuration.from_counts({0: 1, 1: 1})) is None


def test_fifo_serves_sites_in_queue_order():
    c = Configuration.from_counts({-1: 1, 0: 2, 3: 2}, radius=5)
    topple(c, 0, LEFT)          # -1 becomes unstable after 3 was already queued
    assert select_next(TopplePolicy.fifo(), c) == 3
    assert select_next(TopplePolicy.leftmost(), c) == -1


def test_policy_parse():
    assert TopplePolicy.parse("random:5") == TopplePolicy.random(5)
    assert TopplePolicy.parse("FIFO") == TopplePolicy.fifo()
    with pytest.raises(ValueError):
        TopplePolicy.parse("sideways")


# -- stabilize ---------------------------------------------------------------

def test_single_particle_is_already_stable():
    out = stabilize(1, InstructionSource(7, 0.5))
    assert (out.left, out.right, out.hole, out.topplings) == (0, 0, None, 0)


def test_scripted_none_then_both():
    out = stabilize(2, ScriptedSource({0: [NONE, BOTH]}))
    assert out.topplings == 2
    assert out.final_counts == {-1: 1, 1: 1}
    assert out.hole == 0
    assert (out.center_of_mass, out.square_center_of_mass) == (0, 2)
    assert out.odometer == {0: 2}


def test_scripted_three_particles():
    # 0 sends left; 0 still holds 2 and sends right
    out = stabilize(3, ScriptedSource({0: [LEFT, RIGHT]}))
    assert out.final_counts == {-1: 1, 0: 1, 1: 1}
    assert out.hole is None and out.width == 2 and out.topplings == 2


def test_exhausted_script_raises():
    with pytest.raises(IndexError):
        stabilize(2, ScriptedSource({0: [NONE]}))


def test_argument_errors():
    with pytest.raises(ValueError):
        stabilize(0, InstructionSource(1, 0.5))
    with pytest.raises(ValueError):
        InstructionSource(1, 1.0)
    with pytest.raises(ValueError):
        stabilize(3, ScriptedSource({0: [BOTH]}), engine="fast")


@pytest.mark.parametrize("engine", ["fast", "python"])
def test_cap_raises_no_termination(engine):
    with pytest.raises(NoTermination):
        stabilize(30, InstructionSource(1, 0.5), cap=10, engine=engine)


def _check_structure(out, n):
    assert set(out.final_counts.values()) == {1}
    assert len(out.final_counts) == n
    assert out.width in (n - 1, n)
    assert out.width == n - 1 + out.hole_present
    if out.hole is not None:
        assert out.left < out.hole < out.right and out.hole not in out.final_counts
    assert out.center_of_mass == center_of_mass(out.final_counts)
    assert out.square_center_of_mass == square_center_of_mass(out.final_counts)


@given(st.integers(1, 60), seeds, probs)
def test_final_structure(n, seed, p):
    _check_structure(stabilize(n, InstructionSource(seed, p)), n)


@given(st.integers(1, 40), seeds, probs)
def test_abelian_across_policies(n, seed, p):
    src = InstructionSource(seed, p)
    outs = [stabilize(n, src, pol) for pol in POLICIES]
    for o in outs[1:]:
        assert o.final_counts == outs[0].final_counts
        assert o.odometer == outs[0].odometer
        assert o.topplings == outs[0].topplings


@given(st.integers(1, 25), seeds, probs, st.sampled_from(POLICIES))
def test_python_engine_matches_kernel(n, seed, p, policy):
    src = InstructionSource(seed, p)
    a = stabilize(n, src, policy, engine="fast")
    b = stabilize(n, src, policy, engine="python")
    assert (a.final_counts, a.odometer, a.topplings) == (b.final_counts, b.odometer, b.topplings)
    assert (a.center_of_mass, a.square_center_of_mass) == (b.center_of_mass, b.square_center_of_mass)


@given(st.integers(2, 20), seeds, probs)
def test_trace_invariants(n, seed, p):
    out = stabilize(n, InstructionSource(seed, p), trace=True)
    ms, ss = out.trace.center_of_mass, out.trace.square_center_of_mass
    assert len(ms) == len(ss) == out.topplings + 1
    assert all(abs(b - a) <= 1 for a, b in zip(ms, ms[1:]))
    assert (ms[-1], ss[-1]) == (out.center_of_mass, out.square_center_of_mass)


@given(st.integers(2, 20), seeds, probs)
def test_reference_engine_full_scans(n, seed, p):
    out = stabilize_reference(n, InstructionSource(seed, p), check_every_step=True)
    _check_structure(out, n)


@given(st.integers(2, 30), seeds, probs)
def test_reflected_stacks_give_reflected_outcome(n, seed, p):
    src = InstructionSource(seed, p)
    flip = {LEFT: RIGHT, RIGHT: LEFT, NONE: NONE, BOTH: BOTH}

    class Mirrored:
        def instruction_at(self, site, index):
            return flip[src.instruction_at(-site, index)]

    a = stabilize(n, src)
    b = stabilize(n, Mirrored(), engine="python")
    assert b.final_counts == {-v: k for v, k in a.final_counts.items()}
    assert b.topplings == a.topplings

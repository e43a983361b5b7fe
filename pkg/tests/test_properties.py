import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from timber_reuse.diagnostics import ess, hdi, split_rhat
from timber_reuse.evaluation import brier_score, classification_report
from timber_reuse.grading import ReuseLevel, Thresholds, assign_level, assign_levels, level_counts
from timber_reuse.model import class_probabilities, softmax
from timber_reuse.triage import TriageAction, decide

finite = st.floats(-50, 50, allow_nan=False)
unit = st.floats(0, 1, allow_nan=False)
ORDER = {TriageAction.DOWNGRADE_REJECT: 0, TriageAction.NDT_CHECK: 1, TriageAction.REDEPLOY: 2}


@st.composite
def thresholds(draw):
    tau1 = draw(st.floats(0.05, 1.0))
    tau2 = draw(st.floats(0.01, 0.99).map(lambda f: f * tau1))
    assume(0 < tau2 < tau1)
    return Thresholds(tau1, tau2)


@st.composite
def prob_rows(draw, n):
    raw = draw(hnp.arrays(float, (n, 3), elements=st.floats(0.001, 1.0)))
    return raw / raw.sum(axis=1, keepdims=True)


class TestGradingProperties:
    @given(st.lists(st.floats(0, 1.5), max_size=50), thresholds())
    def test_counts_partition(self, R, t):
        counts = level_counts(R, t)
        assert sum(counts) == len(R)
        assert counts == tuple(sum(assign_level(r, t) is lvl for r in R) for lvl in ReuseLevel)

    @given(st.floats(0, 1.5), st.floats(0, 1.5), thresholds())
    def test_level_monotone_in_R(self, a, b, t):
        lo, hi = sorted((a, b))
        assert assign_level(hi, t) <= assign_level(lo, t)

    @given(hnp.arrays(float, st.integers(0, 40), elements=st.floats(0, 1.5)), thresholds())
    def test_vector_and_scalar_agree(self, R, t):
        assert list(assign_levels(R, t.tau1, t.tau2)) == [int(assign_level(r, t)) for r in R]


class TestProbabilityProperties:
    @given(hnp.arrays(float, 3, elements=finite), hnp.arrays(float, (3, 2), elements=finite), hnp.arrays(float, 2, elements=finite))
    def test_simplex(self, a, b, x):
        p = class_probabilities(a, b, x)
        assert abs(p.sum() - 1) < 1e-12 and np.all(p >= 0)

    @given(hnp.arrays(float, (4, 3), elements=finite), st.floats(-1e3, 1e3))
    def test_shift_invariance(self, logits, k):
        np.testing.assert_allclose(softmax(logits + k), softmax(logits), atol=1e-12)

    @given(st.integers(1, 20).flatmap(lambda n: st.tuples(prob_rows(n), hnp.arrays(np.int64, n, elements=st.integers(1, 3)))))
    def test_brier_bounded(self, args):
        probs, y = args
        assert 0 <= brier_score(probs, y) <= 2

    @given(hnp.arrays(np.int64, st.integers(1, 30), elements=st.integers(1, 3)))
    def test_uniform_brier(self, y):
        assert abs(brier_score(np.full((y.size, 3), 1 / 3), y) - 2 / 3) < 1e-12

    # integer-valued logits keep the shifted sums exact, so no ties appear from rounding
    @given(st.integers(1, 15).flatmap(lambda n: st.tuples(
        hnp.arrays(float, (n, 3), elements=st.integers(-50, 50).map(float)),
        hnp.arrays(np.int64, n, elements=st.integers(1, 3)), st.integers(-1000, 1000))))
    def test_argmax_invariant_to_constant_logit_shift(self, args):
        logits, y, shift = args
        probs = np.full((y.size, 3), 1 / 3)
        a = classification_report(y, logits, probs)
        b = classification_report(y, logits + shift, probs)
        np.testing.assert_array_equal(a.predicted, b.predicted)
        assert a.confusion.sum() == y.size


class TestTriageProperties:
    @given(unit, unit)
    def test_monotone(self, p, q):
        lo, hi = sorted((p, q))
        assert ORDER[decide(lo).action] <= ORDER[decide(hi).action]

    @given(unit)
    def test_referentially_transparent(self, p):
        assert decide(p) == decide(p)


class TestDiagnosticsProperties:
    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.floats(0.1, 10), st.floats(-5, 5))
    def test_affine_invariance(self, seed, scale, shift):
        x = np.random.default_rng(seed).standard_normal((3, 60)).cumsum(axis=1)
        assert abs(split_rhat(scale * x + shift) - split_rhat(x)) < 1e-9
        assert abs(ess(scale * x + shift)[0] - ess(x)[0]) < 1e-6

    @settings(deadline=None)
    @given(hnp.arrays(float, st.integers(2, 200), elements=st.floats(-1e3, 1e3)), st.floats(0.05, 0.95))
    def test_hdi_contains_mass(self, x, mass):
        lo, hi = hdi(x, mass)
        assert lo <= hi
        assert np.count_nonzero((x >= lo) & (x <= hi)) >= np.ceil(mass * x.size)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from starpo.errors import InvalidParams
from starpo.metrics import EPS_PE, stability_scores
from starpo.toy.synthetic import KINDS, GeneratorParams, gen_corpus, gen_synthetic
from starpo.trajectory import ErrorLabel


def test_stable_noise_free():
    t, label = gen_synthetic(GeneratorParams("stable", K=8, noise_scale=0.0))
    s = stability_scores(t)
    assert label is ErrorLabel.NONE
    assert s.r_acf == pytest.approx(1.0, abs=1e-12)
    assert s.r_pe == pytest.approx(1.0, abs=1e-8)


def test_loop_two_anchors():
    t, label = gen_synthetic(GeneratorParams("loop", K=8, noise_scale=0.0, n_anchors=2))
    s = stability_scores(t)
    step = np.linalg.norm(t.steps[1] - t.steps[0])
    assert label is ErrorLabel.REPETITION_LOOP
    assert s.r_pe == pytest.approx(step / (7 * step + EPS_PE), rel=1e-12)


def test_leap_lowers_acf():
    def mean_acf(kind):
        return np.mean([stability_scores(gen_synthetic(GeneratorParams(kind, seed=i))[0]).r_acf for i in range(1000)])

    assert mean_acf("leap") < mean_acf("stable")


def test_drift_loses_progress():
    pe = {k: np.mean([stability_scores(gen_synthetic(GeneratorParams(k, seed=i))[0]).r_pe for i in range(200)])
          for k in ("stable", "drift")}
    assert pe["drift"] < pe["stable"]


@settings(max_examples=40, deadline=None)
@given(st.sampled_from(KINDS), st.integers(4, 12), st.integers(2, 24), st.integers(0, 10**6))
def test_deterministic_and_labelled(kind, K, d, seed):
    p = GeneratorParams(kind, K=K, d=d, seed=seed, n_anchors=2)
    a, la = gen_synthetic(p)
    b, lb = gen_synthetic(p)
    assert a == b and la == lb == a.label
    assert a.K == K and a.dim == d


@pytest.mark.parametrize(
    "kw",
    [dict(kind="spiral"), dict(K=2), dict(d=1), dict(noise_scale=-1), dict(kind="leap", K=3),
     dict(kind="loop", K=4, n_anchors=4), dict(max_turn=4.0)],
)
def test_invalid(kw):
    with pytest.raises(InvalidParams):
        gen_synthetic(GeneratorParams(**kw))


def test_corpus_layout():
    c = gen_corpus(3, seed=1)
    assert [t.label.value for t in c[:4]] == ["none", "drift", "leap", "loop"]
    assert len(c) == 12
    assert c == gen_corpus(3, seed=1)
    assert c != gen_corpus(3, seed=2)

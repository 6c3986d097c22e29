"""Model-selection policies."""

import numpy as np
import pytest

from silofed.policy import Candidate, PolicySpec, select_models


def cand(cid, scores, submitter=0):
    return Candidate(cid, submitter, tuple(scores))


CANDS = [cand("a" * 64, [0.8, 0.8]), cand("b" * 64, [0.5, 0.5]),
         cand("c" * 64, [0.9, 0.9])]
OWN = cand("f" * 64, [0.5], submitter=9)


def test_all_selects_everything_in_order():
    out = select_models(CANDS, OWN, PolicySpec("all"))
    assert out == [c.cid for c in CANDS]


def test_self_selects_nothing():
    assert select_models(CANDS, OWN, PolicySpec("self")) == []


def test_top_k_orders_by_score_then_cid():
    out = select_models(CANDS, OWN, PolicySpec("top_k", k=2))
    assert out == ["c" * 64, "a" * 64]


def test_top_k_tie_breaks_lexicographically():
    tied = [cand("d" * 64, [0.7]), cand("b" * 64, [0.7]), cand("a" * 64, [0.2])]
    out = select_models(tied, OWN, PolicySpec("top_k", k=2))
    assert out == ["b" * 64, "d" * 64]


def test_top_k_permutation_invariant():
    spec = PolicySpec("top_k", k=2)
    base = select_models(CANDS, OWN, spec)
    assert select_models(CANDS[::-1], OWN, spec) == base


def test_above_average_strict():
    cands = [cand("a" * 64, [0.2]), cand("b" * 64, [0.4]), cand("c" * 64, [0.9])]
    out = select_models(cands, OWN, PolicySpec("above_average"))
    assert out == ["c" * 64]


def test_above_average_all_equal_selects_nothing():
    cands = [cand("a" * 64, [0.5]), cand("b" * 64, [0.5])]
    assert select_models(cands, OWN, PolicySpec("above_average")) == []


def test_above_median():
    cands = [cand("a" * 64, [0.1]), cand("b" * 64, [0.5]), cand("c" * 64, [0.8])]
    out = select_models(cands, OWN, PolicySpec("above_median"))
    assert out == ["c" * 64]


def test_above_self():
    cands = [cand("a" * 64, [0.4]), cand("b" * 64, [0.6])]
    own = cand("f" * 64, [0.5])
    assert select_models(cands, own, PolicySpec("above_self")) == ["b" * 64]


def test_above_self_unscored_own_accepts_all_scored():
    cands = [cand("a" * 64, [0.1]), cand("b" * 64, [0.6]), cand("c" * 64, [])]
    own = cand("f" * 64, [])
    out = select_models(cands, own, PolicySpec("above_self"))
    assert out == ["a" * 64, "b" * 64]


def test_unscored_candidates_excluded_from_score_policies():
    cands = [cand("a" * 64, []), cand("b" * 64, [0.3])]
    assert select_models(cands, OWN, PolicySpec("top_k", k=5)) == ["b" * 64]
    assert select_models(cands, OWN, PolicySpec("above_average")) == []
    # but kept by all, eligible in random_k
    assert select_models(cands, OWN, PolicySpec("all")) == [c.cid for c in cands]
    picks = select_models(cands, OWN, PolicySpec("random_k", k=2, seed=0))
    assert sorted(picks) == sorted(c.cid for c in cands)


def test_selection_is_subset_without_duplicates():
    rng = np.random.default_rng(0)
    kinds = ["all", "self", "random_k", "top_k", "above_average",
             "above_median", "above_self"]
    for trial in range(50):
        cands = [cand(format(i, "064x"), rng.random(int(rng.integers(0, 4))))
                 for i in range(int(rng.integers(0, 6)))]
        own = cand("e" * 64, rng.random(int(rng.integers(0, 3))))
        for kind in kinds:
            spec = PolicySpec(kind, k=2, seed=trial)
            out = select_models(cands, own, spec)
            assert len(out) == len(set(out))
            assert set(out) <= {c.cid for c in cands}
            if kind == "self":
                assert out == []


def test_monotonicity_raising_score_keeps_selection():
    base = [cand("a" * 64, [0.5]), cand("b" * 64, [0.4]), cand("c" * 64, [0.6])]
    for kind in ("top_k", "above_average", "above_median", "above_self"):
        spec = PolicySpec(kind, k=2)
        own = cand("f" * 64, [0.45])
        before = select_models(base, own, spec)
        boosted = [cand("a" * 64, [0.9])] + base[1:]
        after = select_models(boosted, own, spec)
        if "a" * 64 in before:
            assert "a" * 64 in after


def test_random_k_reproducible_and_uniform():
    cands = [cand(format(i, "064x"), []) for i in range(4)]
    spec = PolicySpec("random_k", k=1, seed=123)
    assert (select_models(cands, OWN, spec)
            == select_models(cands, OWN, spec))

    rng = np.random.default_rng(99)
    hits = {c.cid: 0 for c in cands}
    draws = 10_000
    for _ in range(draws):
        for cid in select_models(cands, OWN, spec, rng=rng):
            hits[cid] += 1
    for count in hits.values():
        assert abs(count / draws - 0.25) < 0.02


def test_random_k_caps_at_population():
    cands = [cand("a" * 64, []), cand("b" * 64, [])]
    out = select_models(cands, OWN, PolicySpec("random_k", k=10, seed=1))
    assert sorted(out) == [c.cid for c in cands]


def test_affine_score_transform_invariance():
    rng = np.random.default_rng(1)
    for _ in range(20):
        cands = [cand(format(i, "064x"), rng.random(3) * 0.5 + 0.1)
                 for i in range(5)]
        own = cand("e" * 64, rng.random(2) * 0.5 + 0.1)

        def transform(c, a=0.6, b=0.2):
            return Candidate(c.cid, c.submitter,
                             tuple(a * s + b for s in c.scores))

        mapped = [transform(c) for c in cands]
        own_mapped = transform(own)
        for kind in ("top_k", "above_average", "above_median", "above_self"):
            spec = PolicySpec(kind, k=3)
            assert (select_models(cands, own, spec)
                    == select_models(mapped, own_mapped, spec))


def test_scaling_preserves_top_k():
    rng = np.random.default_rng(2)
    cands = [cand(format(i, "064x"), rng.random(2)) for i in range(6)]
    scaled = [Candidate(c.cid, c.submitter, tuple(0.5 * s for s in c.scores))
              for c in cands]
    spec = PolicySpec("top_k", k=3)
    assert select_models(cands, OWN, spec) == select_models(scaled, OWN, spec)


def test_spec_validation():
    with pytest.raises(ValueError):
        PolicySpec("bogus")
    with pytest.raises(ValueError):
        PolicySpec("top_k", k=0)
    with pytest.raises(ValueError):
        PolicySpec("all", reduce="sum")
    with pytest.raises(ValueError):
        Candidate("a" * 64, 0, (1.5,))

import numpy as np
import pytest
import torch

from src.forge.synthetic import make_blobs
from src.nets.bundle import ModelBundle
from src.relabel.multilabel import (
    build_multilabel,
    build_multilabels,
    fused_confidence,
    hit_rate,
    jsd,
    label_count,
    label_counts,
    split_clean_noisy,
    top1_hit_rate,
)
from src.relabel.relabeler import (
    membership_from_records,
    read_relabel_dump,
    relabel_dataset,
    relabel_from_scores,
    write_relabel_dump,
)
from src.relabel.views import DualViewAugmenter
from src.schemas.experiment import BackboneConfig, RelabelConfig
from src.schemas.records import MultiLabelRecord


def _simplex(rng, c):
    p = rng.random(c) ** 3
    return p / p.sum()


# ---------------------------
# fused_confidence
# ---------------------------
def test_fused_examples():
    pw, ps = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    assert torch.allclose(fused_confidence(pw, ps, 1.0), torch.tensor([1.0, 0.0], dtype=torch.float64))
    assert torch.allclose(fused_confidence(pw, ps, 0.0), torch.tensor([0.0, 1.0], dtype=torch.float64))
    assert torch.allclose(fused_confidence(pw, ps, 0.5), torch.tensor([0.5, 0.5], dtype=torch.float64))


def test_fused_rejects_non_simplex_and_bad_gamma():
    with pytest.raises(ValueError, match="probability vector"):
        fused_confidence(np.array([0.6, 0.6]), np.array([0.5, 0.5]), 0.5)
    with pytest.raises(ValueError, match="gamma"):
        fused_confidence(np.array([1.0, 0.0]), np.array([1.0, 0.0]), 1.5)


def test_fused_output_is_simplex():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        c = int(rng.integers(2, 12))
        out = fused_confidence(_simplex(rng, c), _simplex(rng, c), float(rng.random()))
        assert abs(float(out.sum()) - 1.0) < 1e-9
        assert float(out.min()) >= 0.0


# ---------------------------
# jsd
# ---------------------------
def test_jsd_examples():
    assert float(jsd([0.2, 0.8], [0.2, 0.8])) == 0.0
    assert float(jsd([1.0, 0.0], [0.0, 1.0])) == pytest.approx(1.0, abs=1e-12)
    assert float(jsd([1.0, 0.0], [0.5, 0.5])) == pytest.approx(0.3113, abs=1e-3)


def test_jsd_symmetric_and_bounded():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        c = int(rng.integers(2, 10))
        a, b = _simplex(rng, c), _simplex(rng, c)
        if rng.random() < 0.2:
            a = np.eye(c)[rng.integers(0, c)]
        ab, ba = float(jsd(a, b)), float(jsd(b, a))
        assert abs(ab - ba) < 1e-12
        assert 0.0 <= ab <= 1.0


def test_jsd_batched_rows():
    y = np.eye(3)[[0, 1, 2]]
    p = np.full((3, 3), 1 / 3)
    d = jsd(y, p)
    assert d.shape == (3,)
    assert torch.allclose(d, d[0].expand(3))


# ---------------------------
# label_count / split
# ---------------------------
def test_label_count_examples():
    assert label_count(0.0, 10) == 1
    assert label_count(0.35, 100) == 35
    assert label_count(0.005, 100) == 1
    assert label_count(1.0, 10) == 10


def test_label_counts_match_scalar():
    rng = np.random.default_rng(2)
    d = rng.random(1000)
    q = label_counts(d, 37).numpy()
    assert q.tolist() == [label_count(float(v), 37) for v in d]


def test_split_examples():
    assert split_clean_noisy(np.full(5, 0.3)).clean.all()
    s = split_clean_noisy(np.array([0.1, 0.9]))
    assert s.tau == pytest.approx(0.5)
    assert s.clean.tolist() == [True, False]
    assert (s.n_clean, s.n_noisy) == (1, 1)


def test_split_rejects_empty():
    with pytest.raises(ValueError, match="at least one"):
        split_clean_noisy(np.array([]))


# ---------------------------
# build_multilabel
# ---------------------------
def _oracle(p, y, q, clean):
    candidates = [k for k in range(len(p)) if clean or k != y]
    ranked = sorted(candidates, key=lambda k: (-p[k], k))
    return ranked[: min(q, len(ranked))]


def test_build_multilabel_examples():
    p = [0.1, 0.6, 0.3]
    assert build_multilabel(p, observed=1, q=1, clean=True) == [1]
    assert build_multilabel(p, observed=1, q=1, clean=False) == [2]
    assert build_multilabel(p, observed=1, q=3, clean=False) == [2, 0]


def test_build_multilabel_ties_prefer_lower_index():
    assert build_multilabel([0.25, 0.25, 0.25, 0.25], observed=0, q=2, clean=False) == [1, 2]
    assert build_multilabel([0.5, 0.0, 0.5], observed=1, q=2, clean=True) == [0, 2]


def test_build_multilabel_matches_oracle_exhaustively():
    rng = np.random.default_rng(3)
    for c in range(2, 9):
        for _ in range(40):
            # coarse grid forces ties
            p = rng.integers(0, 4, size=c).astype(np.float64)
            p = p / p.sum() if p.sum() > 0 else np.full(c, 1.0 / c)
            for y in range(c):
                for q in range(1, c + 1):
                    for clean in (True, False):
                        got = build_multilabel(p, y, q, clean)
                        assert got == _oracle(p, y, q, clean)
                        assert got
                        if not clean:
                            assert y not in got


def test_build_multilabels_membership_agrees_with_lists():
    rng = np.random.default_rng(4)
    n, c = 50, 6
    p = np.stack([_simplex(rng, c) for _ in range(n)])
    y = rng.integers(0, c, size=n)
    q = rng.integers(1, c + 1, size=n)
    clean = rng.random(n) < 0.5
    membership, lists = build_multilabels(p, y, q, clean)
    assert membership.shape == (n, c)
    for i in range(n):
        assert sorted(lists[i]) == np.flatnonzero(membership[i]).tolist()


def test_build_multilabels_rejects_length_mismatch():
    with pytest.raises(ValueError, match="differ in length"):
        build_multilabels(np.full((2, 3), 1 / 3), [0], [1, 1], [True, True])


# ---------------------------
# hit rates
# ---------------------------
def test_hit_rate_examples():
    true = np.array([0, 1, 2, 1])
    assert hit_rate(np.ones((4, 3), dtype=bool), true) == 1.0
    assert hit_rate(np.eye(3, dtype=bool)[true], true) == 1.0
    member = np.eye(3, dtype=bool)[[0, 0, 2, 2]]
    assert hit_rate(member, true) == 0.5
    assert hit_rate(member, true, subset=np.array([True, False, False, False])) == 1.0
    assert hit_rate(member, true, subset=np.zeros(4, dtype=bool)) is None


def test_top1_hit_rate():
    p = np.array([[0.7, 0.3], [0.2, 0.8], [0.6, 0.4]])
    assert top1_hit_rate(p, np.array([0, 1, 1])) == pytest.approx(2 / 3)
    assert top1_hit_rate(p, np.array([0, 1, 1]), subset=np.array([False, False, True])) == 0.0


# ---------------------------
# relabel_from_scores / dump
# ---------------------------
def _scores(n=40, c=5, seed=5):
    rng = np.random.default_rng(seed)
    p = np.stack([_simplex(rng, c) for _ in range(n)])
    observed = rng.integers(0, c, size=n)
    return p, observed


@pytest.mark.parametrize("c", [2, 5, 10])
def test_relabel_from_scores_invariants(c):
    n = 1000
    p, observed = _scores(n=n, c=c, seed=c)
    result = relabel_from_scores(p, observed, np.arange(n) + 100, c)
    assert len(result) == n
    assert result.tau == pytest.approx(float(result.d.mean()))
    assert ((result.d >= 0) & (result.d <= 1)).all()
    assert np.array_equal(result.membership.sum(axis=1), result.q)
    for i in range(n):
        labels = result.label_lists[i]
        assert len(labels) == result.q[i] >= 1
        if not result.clean[i]:
            assert observed[i] not in labels
    assert 0 < result.n_clean < n


def test_with_membership_replaces_label_sets():
    p, observed = _scores(n=4, c=3)
    result = relabel_from_scores(p, observed, np.arange(4), 3)
    m = np.array([[1, 0, 1], [0, 1, 0], [1, 1, 1], [0, 0, 1]], dtype=bool)
    swapped = result.with_membership(m)
    assert swapped.label_lists == ((0, 2), (1,), (0, 1, 2), (2,))
    assert swapped.q.tolist() == [2, 1, 3, 1]
    assert np.array_equal(swapped.d, result.d)
    assert swapped.tau == result.tau
    with pytest.raises(ValueError, match="membership must be"):
        result.with_membership(m[:, :2])
    m[1] = False
    with pytest.raises(ValueError, match="at least one class"):
        result.with_membership(m)


def test_relabel_dump_round_trip(tmp_path):
    p, observed = _scores()
    ids = np.arange(40) + 100
    result = relabel_from_scores(p, observed, ids, 5)
    path = write_relabel_dump(tmp_path / "relabel.jsonl", result)
    records = read_relabel_dump(path)
    assert [r.id for r in records] == ids.tolist()
    assert np.array_equal(membership_from_records(records, ids, 5), result.membership)
    # reordered ids follow the ids argument
    rev = ids[::-1]
    assert np.array_equal(membership_from_records(records, rev, 5), result.membership[::-1])


def test_membership_from_records_missing_id():
    rec = MultiLabelRecord(id=1, d=0.2, clean=True, q=1, labels=[0])
    with pytest.raises(ValueError, match="no record for id 2"):
        membership_from_records([rec], np.array([1, 2]), 3)


def test_noisy_record_may_not_keep_observed():
    with pytest.raises(ValueError, match="observed"):
        MultiLabelRecord(id=0, d=0.9, clean=False, q=1, labels=[2], observed=2)
    with pytest.raises(ValueError, match="q="):
        MultiLabelRecord(id=0, d=0.9, clean=True, q=2, labels=[2])


# ---------------------------
# views / relabel_dataset
# ---------------------------
def _images(n=6):
    return make_blobs(2, n // 2, image_size=8, seed=0).images


def test_views_keep_shape_and_range():
    aug = DualViewAugmenter()
    x = _images()
    for view in (aug.weak(x, seed=0), aug.strong(x, seed=0)):
        assert view.shape == x.shape
        assert view.dtype == torch.float32
        assert float(view.min()) >= 0.0 and float(view.max()) <= 1.0


def test_seeded_views_reproducible_and_isolated():
    aug = DualViewAugmenter()
    x = _images()
    torch.manual_seed(123)
    before = torch.rand(3)
    torch.manual_seed(123)
    a = aug.strong(x, seed=7)
    after = torch.rand(3)
    b = aug.strong(x, seed=7)
    assert torch.equal(a, b)
    assert torch.equal(before, after)


def test_views_reject_unbatched_input():
    with pytest.raises(ValueError, match="batch"):
        DualViewAugmenter().weak(np.zeros((3, 8, 8), dtype=np.uint8))


@pytest.mark.parametrize("dual_view", [True, False])
def test_relabel_dataset_on_tiny_bundle(dual_view):
    bundle = ModelBundle.build(BackboneConfig(channels=8, width=4, seed=0), 3).eval()
    d = make_blobs(3, 4, image_size=8, seed=0)
    cfg = RelabelConfig(batch_size=5, dual_view=dual_view)
    a = relabel_dataset(bundle, d.images, d.labels, d.ids, cfg, seed=1)
    b = relabel_dataset(bundle, d.images, d.labels, d.ids, cfg, seed=1)
    assert a.p_ws.shape == (12, 3)
    assert np.allclose(a.p_ws.sum(axis=1), 1.0)
    assert np.array_equal(a.p_ws, b.p_ws)
    assert np.array_equal(a.membership, b.membership)
    assert not bundle.training

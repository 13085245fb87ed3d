import pytest
from hypothesis import given, settings, strategies as st

from pivot_ensemble.backends import BackendConfig, MockBackend, mock_translation
from pivot_ensemble.core import TranslationPath, lang, validate_pool
from pivot_ensemble.errors import EmptyCorpus, GenerationFailed
from pivot_ensemble.generation import generate_corpus, generate_pool
from pivot_ensemble.storage import DiskCache

from conftest import EN, ES, IT, KO, PT, segments

PATHS = [TranslationPath.direct(KO, IT)] + [TranslationPath.via(KO, p, IT) for p in (EN, ES, PT)]


def expected_text(source, path):
    text = source
    for a, b in path.hops():
        text = mock_translation(text, a, b)
    return text


def test_pool_follows_path_order(ko_segments):
    pool = generate_pool(ko_segments[0], PATHS, MockBackend())
    assert [c.path for c in pool.candidates] == PATHS
    assert validate_pool(pool) == []


def test_pivot_candidates_compose_two_hops(ko_segments):
    run = generate_corpus(ko_segments, PATHS, MockBackend())
    for seg, pool in zip(ko_segments, run.pools):
        for c in pool.candidates:
            assert c.text == expected_text(seg.text, c.path)
            if c.path.is_pivot:
                assert c.intermediate == mock_translation(seg.text, lang(KO), c.path.pivot)


def test_first_hops_precede_second_hops(ko_segments):
    m = MockBackend()
    generate_corpus(ko_segments, PATHS, m)
    pairs = [pair for pair, _ in m.batches]
    first = [i for i, (s, _) in enumerate(pairs) if s == KO]
    second = [i for i, (s, _) in enumerate(pairs) if s != KO]
    assert max(first) < min(second)


def test_batches_grouped_by_pair_and_chunked():
    segs = segments([f"문장 {i}" for i in range(5)])
    m = MockBackend(BackendConfig(max_batch=2))
    generate_corpus(segs, PATHS[:2], m)
    assert m.batches == [
        ((KO, IT), 2), ((KO, IT), 2), ((KO, IT), 1),
        ((KO, EN), 2), ((KO, EN), 2), ((KO, EN), 1),
        ((EN, IT), 2), ((EN, IT), 2), ((EN, IT), 1),
    ]  # fmt: skip


@settings(max_examples=25)
@given(st.integers(1, 6), st.integers(0, 3), st.integers(1, 4))
def test_call_count_cold_and_warm(tmp_path_factory, n_segs, n_pivots, parallelism):
    segs = segments([f"s{i}" for i in range(n_segs)])
    paths = PATHS[: 1 + n_pivots]
    cache = DiskCache(tmp_path_factory.mktemp("c"))
    cold = MockBackend()
    a = generate_corpus(segs, paths, cold, cache, parallelism)
    assert cold.calls == n_segs * (1 + 2 * n_pivots)
    warm = MockBackend()
    b = generate_corpus(segs, paths, warm, cache, parallelism)
    assert warm.calls == 0 and a.pools == b.pools


def test_parallelism_does_not_change_pools(ko_segments):
    one = generate_corpus(ko_segments, PATHS, MockBackend(BackendConfig(max_batch=1)), parallelism=1)
    many = generate_corpus(ko_segments, PATHS, MockBackend(BackendConfig(max_batch=1)), parallelism=8)
    assert one.pools == many.pools


def test_failed_path_isolated(ko_segments):
    m = MockBackend(fail=lambda r: r.target_lang == lang(ES))
    run = generate_corpus(ko_segments, PATHS, m)
    assert not run.failures
    for pool in run.pools:
        assert [c.path.code for c in pool.candidates] == ["direct", EN, PT]
        assert [f.path.code for f in pool.failures] == [ES]
        assert len(pool.candidates) + len(pool.failures) == len(PATHS)
        assert validate_pool(pool) == []


def test_segment_with_no_candidates(ko_segments):
    m = MockBackend(fail=lambda r: r.text == ko_segments[1].text)
    run = generate_corpus(ko_segments, PATHS[:1], m, parallelism=1)
    # the failing batch contains all three segments
    assert set(run.failures) == {"0", "1", "2"}
    m = MockBackend(BackendConfig(max_batch=1), fail=lambda r: r.text == ko_segments[1].text)
    run = generate_corpus(ko_segments, PATHS[:1], m)
    assert set(run.failures) == {"1"} and [p.segment_id for p in run.pools] == ["0", "2"]
    with pytest.raises(GenerationFailed):
        generate_pool(ko_segments[1], PATHS[:1], m)


def test_rejects_bad_inputs(ko_segments):
    with pytest.raises(EmptyCorpus):
        generate_corpus([], PATHS, MockBackend())
    with pytest.raises(ValueError):
        generate_corpus(ko_segments, [], MockBackend())
    with pytest.raises(ValueError):
        generate_corpus(ko_segments, [PATHS[0], PATHS[0]], MockBackend())
    with pytest.raises(ValueError):
        generate_corpus(ko_segments, [PATHS[0], TranslationPath.direct(KO, EN)], MockBackend())
    with pytest.raises(ValueError):
        generate_corpus(segments(["x"], EN), PATHS, MockBackend())

import json
import threading

import pytest
from hypothesis import given, strategies as st

from pivot_ensemble.core import CandidatePool
from pivot_ensemble.errors import CacheCorrupt, ParseError, StorageError
from pivot_ensemble.storage import (
    CacheKey,
    DiskCache,
    Operation,
    RunManifest,
    cache_get,
    content_hash,
    fingerprint_lines,
    read_jsonl,
    write_jsonl,
)

from conftest import pools


def key(text="x", backend="mock:"):
    return CacheKey.for_payload(Operation.TRANSLATE, {"text": text}, backend)


class TestCacheKey:
    def test_payload_key_order_irrelevant(self):
        a = CacheKey.for_payload(Operation.COMPLETE, {"a": 1, "b": 2}, "m")
        b = CacheKey.for_payload(Operation.COMPLETE, {"b": 2, "a": 1}, "m")
        assert a.digest == b.digest

    def test_backend_and_operation_separate_entries(self):
        assert key(backend="a").digest != key(backend="b").digest
        p = {"text": "x"}
        assert CacheKey.for_payload(Operation.TRANSLATE, p, "m").digest != CacheKey.for_payload(Operation.QE_SCORE, p, "m").digest

    def test_hash_is_sha256_hex(self):
        assert len(content_hash({"a": 1})) == 64


class TestDiskCache:
    def test_roundtrip_and_layout(self, tmp_path):
        cache = DiskCache(tmp_path)
        k = key()
        assert cache.get(k) is None
        cache.put(k, "valore")
        assert cache.get(k) == "valore"
        path = cache.path_for(k)
        assert path.parent.name == k.digest[:2] and path.parent.parent.name == "translate"
        assert (cache.hits, cache.misses) == (1, 1)

    @pytest.mark.parametrize("value", [None, "", [], {}])
    def test_refuses_empty(self, tmp_path, value):
        with pytest.raises(StorageError):
            DiskCache(tmp_path).put(key(), value)

    def test_refuses_oversize(self, tmp_path):
        with pytest.raises(StorageError):
            DiskCache(tmp_path, max_value_bytes=100).put(key(), "x" * 200)

    def test_corrupt_entry_evicted(self, tmp_path):
        cache = DiskCache(tmp_path)
        cache.put(key(), "v")
        cache.path_for(key()).write_text("{truncated", encoding="utf-8")
        with pytest.raises(CacheCorrupt):
            cache.get(key())
        assert not cache.path_for(key()).exists()
        assert cache_get(cache, key()) is None

    def test_foreign_entry_is_corrupt(self, tmp_path):
        cache = DiskCache(tmp_path)
        cache.put(key("a"), "v")
        cache.path_for(key("b")).parent.mkdir(parents=True, exist_ok=True)
        cache.path_for(key("b")).write_text(cache.path_for(key("a")).read_text(encoding="utf-8"), encoding="utf-8")
        with pytest.raises(CacheCorrupt):
            cache.get(key("b"))

    def test_concurrent_writers(self, tmp_path):
        cache = DiskCache(tmp_path)
        errors = []

        def work(i):
            try:
                for j in range(20):
                    cache.put(key(str(j)), f"v{j}")
                    assert cache.get(key(str(j))) == f"v{j}"
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=work, args=(i,)) for i in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert errors == []
        assert not list(tmp_path.rglob(".tmp-*"))

    def test_unwritable_root(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(StorageError):
            DiskCache(blocker).put(key(), "v")


class TestJsonl:
    @given(st.lists(pools(), max_size=4))
    def test_roundtrip(self, tmp_path_factory, records):
        path = tmp_path_factory.mktemp("j") / "pools.jsonl"
        assert write_jsonl(path, records) == len(records)
        assert list(read_jsonl(path, CandidatePool)) == records

    def test_malformed_line_number(self, tmp_path):
        path = tmp_path / "x.jsonl"
        path.write_text('{"a": 1}\n{"a": \n{"a": 3}\n', encoding="utf-8")
        with pytest.raises(ParseError) as info:
            list(read_jsonl(path))
        assert info.value.line_number == 2
        assert "malformed" in str(info.value)

    def test_truncated_final_line(self, tmp_path):
        path = tmp_path / "x.jsonl"
        path.write_text('{"a": 1}\n{"a": 2', encoding="utf-8")
        with pytest.raises(ParseError) as info:
            list(read_jsonl(path))
        assert info.value.line_number == 2 and "truncated" in str(info.value)

    def test_wrong_shape(self, tmp_path):
        path = tmp_path / "x.jsonl"
        path.write_text('{"segment_id": "0"}\n', encoding="utf-8")
        with pytest.raises(ParseError):
            list(read_jsonl(path, CandidatePool))

    def test_non_ascii_kept_verbatim(self, tmp_path):
        path = tmp_path / "x.jsonl"
        write_jsonl(path, [{"t": "날씨"}])
        assert "날씨" in path.read_text(encoding="utf-8")


class TestManifest:
    def test_roundtrip(self, tmp_path):
        m = RunManifest({"k": 3}, fingerprint_lines(["a"]), ["direct"], 3, "mbr", "0.1.0", failures={"2": "x"})
        m.write(tmp_path / "m.json")
        assert RunManifest.read(tmp_path / "m.json") == m
        assert json.loads((tmp_path / "m.json").read_text())["strategy"] == "mbr"

    def test_unreadable(self, tmp_path):
        (tmp_path / "m.json").write_text("[]")
        with pytest.raises(ParseError):
            RunManifest.read(tmp_path / "m.json")

    def test_fingerprint_sensitive_to_line_split(self):
        assert fingerprint_lines(["ab", "c"]) != fingerprint_lines(["a", "bc"])

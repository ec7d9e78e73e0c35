import math
import threading

import numpy as np
import pytest

from automt.backends import BackendEndpoint, BackendKind
from automt.errors import UnknownIndex
from automt.ontology import Verb
from automt.relations import MetamorphicRelation
from automt.store import (
    MrStore,
    RetrievalQuery,
    StoredMr,
    build_store,
    embedding_text,
    rank_unit_query,
    retrieve,
)

EMBED = BackendEndpoint(BackendKind.EMBED, "mock:default?dim=16")
KEYED = BackendEndpoint(BackendKind.EMBED, "mock:default?dim=2")


def _mr(i, road="intersection"):
    return MetamorphicRelation(
        road, Verb.ADDS, f"red light variant {i} on the roadside", "slow down",
        source_rule=f"rule {i}", region="DE",
    )


def _manual_store(vectors, counts=None):
    counts = counts or [0] * len(vectors)
    entries = [
        StoredMr(i, _mr(i), np.asarray(v, dtype=np.float32), counts[i])
        for i, v in enumerate(vectors)
    ]
    return MrStore(entries, len(vectors[0]))


def test_build_store_initializes_indices_and_counts():
    mrs = [_mr(i) for i in range(5)]
    store = build_store(mrs, EMBED)
    assert [e.index for e in store.entries] == [0, 1, 2, 3, 4]
    assert all(e.execution_count == 0 for e in store.entries)
    assert store.dim == 16
    for entry in store.entries:
        assert abs(float(np.linalg.norm(entry.embedding.astype(np.float64))) - 1.0) < 1e-6


def test_build_store_rejects_empty():
    with pytest.raises(ValueError):
        build_store([], EMBED)


def test_exact_match_query_ranks_first():
    store = build_store([_mr(i) for i in range(4)], EMBED)
    query = RetrievalQuery(embedding_text(store.entries[2].mr), top_k=4)
    ranked = retrieve(store, query, EMBED)
    assert ranked[0][0].index == 2
    assert ranked[0][1] == pytest.approx(1.0, abs=1e-6)


def test_orthogonal_and_diagonal_similarities():
    store = _manual_store([[1.0, 0.0], [0.0, 1.0]])
    ranked = retrieve(store, RetrievalQuery("vec:1,0", top_k=2), KEYED)
    assert ranked[0][0].index == 0
    assert ranked[0][1] == pytest.approx(1.0)
    assert ranked[1][1] == pytest.approx(0.0, abs=1e-9)
    diagonal = retrieve(store, RetrievalQuery("vec:0.7071067811865476,0.7071067811865476"), KEYED)
    # cosine of (1,0) against the unit diagonal: exactly sqrt(2)/2
    assert diagonal[0][1] == pytest.approx(math.sqrt(2) / 2, abs=1e-6)


def test_tie_breaks_by_count_then_index():
    store = _manual_store([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]], counts=[3, 1, 1])
    ranked = retrieve(store, RetrievalQuery("vec:1,0", top_k=3), KEYED)
    assert [e.index for e, _ in ranked] == [1, 2, 0]


def test_retrieve_returns_min_topk_store_size():
    store = _manual_store([[1.0, 0.0], [0.0, 1.0]])
    assert len(retrieve(store, RetrievalQuery("vec:1,0", top_k=10), KEYED)) == 2
    with pytest.raises(ValueError):
        RetrievalQuery("vec:1,0", top_k=0)


def _brute_force_rank(store, q):
    rows = []
    for entry in store.entries:
        sim = float(np.dot(entry.embedding, q))
        rows.append((entry.index, sim, entry.execution_count))
    rows.sort(key=lambda r: (-r[1], r[2], r[0]))
    return [(index, sim) for index, sim, _ in rows]


def test_ranking_matches_brute_force_on_random_stores():
    rng = np.random.RandomState(42)
    for _ in range(30):
        n, dim = rng.randint(1, 40), rng.randint(2, 12)
        vectors = rng.randn(n, dim)
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
        counts = rng.randint(0, 4, size=n).tolist()
        store = _manual_store(vectors.tolist(), counts)
        for _ in range(5):
            q = rng.randn(dim)
            q = (q / np.linalg.norm(q)).astype(np.float32)
            got = [(e.index, s) for e, s in rank_unit_query(store, q)]
            assert got == _brute_force_rank(store, q)


def test_record_execution_and_unknown_index():
    store = _manual_store([[1.0, 0.0]])
    assert store.record_execution(0) == 1
    assert store.record_execution(0) == 2
    with pytest.raises(UnknownIndex):
        store.record_execution(5)


def test_concurrent_record_execution_no_lost_updates():
    store = _manual_store([[1.0, 0.0]])
    per_thread, threads = 200, 8

    def hammer():
        for _ in range(per_thread):
            store.record_execution(0)

    workers = [threading.Thread(target=hammer) for _ in range(threads)]
    for w in workers:
        w.start()
    for w in workers:
        w.join()
    assert store.entries[0].execution_count == per_thread * threads


def test_save_load_round_trip(tmp_path):
    mrs = [
        _mr(0),
        MetamorphicRelation(
            "any roads", Verb.REPLACES, "the weather with a dust storm", "slow down",
            source_rule="multi\nline rule, with comma", region="CA",
            hallucination_score=1 / 3,
        ),
    ]
    store = build_store(mrs, EMBED)
    store.entries[1].execution_count = 7
    store.save(tmp_path / "store")
    loaded = MrStore.load(tmp_path / "store")
    assert len(loaded) == 2
    assert loaded.dim == store.dim
    for original, restored in zip(store.entries, loaded.entries):
        assert restored.index == original.index
        assert restored.execution_count == original.execution_count
        assert restored.mr == original.mr
        assert np.abs(restored.embedding - original.embedding).max() <= 1e-12


def test_double_build_is_byte_identical(tmp_path):
    mrs = [_mr(i) for i in range(4)]
    build_store(mrs, EMBED).save(tmp_path / "a")
    build_store(mrs, EMBED).save(tmp_path / "b")
    for name in ("mrs.csv", "embeddings.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_persistence_after_record_execution(tmp_path):
    store = build_store([_mr(0)], EMBED)
    store.save(tmp_path / "store")
    store.record_execution(0)
    assert MrStore.load(tmp_path / "store").entries[0].execution_count == 1

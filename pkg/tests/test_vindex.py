import numpy as np
import pytest

from oceanarium.embedding import HashedNgramEmbedder
from oceanarium.vindex import (
    CorpusIndex,
    IndexFileError,
    Paragraph,
    RetrievalConfig,
    SentenceRecord,
    build_index,
)


def random_records(n, dim, seed, prefix="s"):
    rng = np.random.default_rng(seed)
    rows = rng.standard_normal((n, dim)).astype(np.float32)
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return [
        SentenceRecord(sent_id=f"{prefix}{i:05d}", para_id=f"p{i:05d}", text=f"text {i}", embedding=rows[i])
        for i in range(n)
    ]


def oracle_ranking(index: CorpusIndex, query: np.ndarray) -> list[str]:
    """Independent O(N*D) scan over the stored rows via one vectorized product."""
    q = np.asarray(query, dtype=np.float64)
    norm = float(np.linalg.norm(q))
    if norm > 0:
        q = q / norm
    ids = index.sentence_ids
    scores = index.embeddings.astype(np.float64) @ q
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [ids[i] for i in order]


class TestBuild:
    def test_empty_index_valid(self):
        index = build_index([], dimension=8)
        assert len(index) == 0
        assert index.search_exact(np.ones(8), k=3) == []
        assert index.search_ann(np.ones(8), k=3) == []

    def test_duplicate_id_rejected(self):
        records = random_records(2, 4, seed=0)
        records[1].sent_id = records[0].sent_id
        with pytest.raises(ValueError, match="duplicate"):
            build_index(records)

    def test_dimension_mismatch_rejected(self):
        records = random_records(2, 4, seed=0)
        records[1].embedding = np.ones(5, dtype=np.float32)
        with pytest.raises(ValueError, match="dimension"):
            build_index(records)

    def test_query_dimension_checked(self):
        index = build_index(random_records(3, 4, seed=0))
        with pytest.raises(ValueError, match="dimension"):
            index.search_exact(np.ones(7), k=1)


class TestSearchExact:
    def test_self_match_first(self):
        records = random_records(50, 16, seed=1)
        index = build_index(records)
        hits = index.search_exact(records[17].embedding, k=3)
        assert hits[0].sent_id == records[17].sent_id
        assert abs(hits[0].score - 1.0) < 1e-6

    def test_k_larger_than_index(self):
        index = build_index(random_records(5, 8, seed=2))
        assert len(index.search_exact(np.ones(8), k=50)) == 5

    def test_scores_descending_and_bounded(self):
        index = build_index(random_records(100, 16, seed=3))
        hits = index.search_exact(np.ones(16), k=100)
        scores = [h.score for h in hits]
        assert scores == sorted(scores, reverse=True)
        assert all(-1.0 <= s <= 1.0 for s in scores)

    def test_matches_oracle_ranking(self):
        records = random_records(200, 24, seed=4)
        index = build_index(records)
        rng = np.random.default_rng(99)
        for _ in range(10):
            query = rng.standard_normal(24)
            hits = index.search_exact(query, k=200)
            assert [h.sent_id for h in hits] == oracle_ranking(index, query)

    def test_deterministic_tie_break_by_sent_id(self):
        vector = np.zeros(4, dtype=np.float32)
        vector[0] = 1.0
        records = [
            SentenceRecord(f"s{i}", f"p{i}", f"t{i}", vector.copy()) for i in (3, 1, 2, 0)
        ]
        index = build_index(records)
        hits = index.search_exact(vector, k=4)
        assert [h.sent_id for h in hits] == ["s0", "s1", "s2", "s3"]


class TestAnn:
    def test_small_index_identical_to_exact(self):
        records = random_records(10, 16, seed=5)
        index = build_index(records)
        rng = np.random.default_rng(6)
        for _ in range(20):
            query = rng.standard_normal(16)
            exact = index.search_exact(query, k=5)
            approx = index.search_ann(query, k=5)
            assert [h.sent_id for h in exact] == [h.sent_id for h in approx]
            assert [h.score for h in exact] == [h.score for h in approx]

    def test_self_match_ranked_first(self):
        records = random_records(500, 32, seed=7)
        index = build_index(records)
        for i in (0, 100, 499):
            hits = index.search_ann(records[i].embedding, k=2)
            assert hits[0].sent_id == records[i].sent_id

    def test_recall_on_medium_index(self):
        records = random_records(2000, 32, seed=8)
        index = build_index(records)
        rng = np.random.default_rng(9)
        found = total = 0
        for _ in range(50):
            query = rng.standard_normal(32)
            truth = {h.sent_id for h in index.search_exact(query, k=5)}
            got = {h.sent_id for h in index.search_ann(query, k=5)}
            found += len(truth & got)
            total += len(truth)
        assert found / total >= 0.95


class TestPersistence:
    def test_round_trip_bit_identical(self, tmp_path):
        records = random_records(300, 16, seed=10)
        index = build_index(records)
        path = tmp_path / "test.idx"
        index.save(path)
        reloaded = CorpusIndex.load(path)
        rng = np.random.default_rng(11)
        for _ in range(20):
            query = rng.standard_normal(16)
            a = index.search_exact(query, k=10)
            b = reloaded.search_exact(query, k=10)
            assert a == b
            c = index.search_ann(query, k=10)
            d = reloaded.search_ann(query, k=10)
            assert c == d

    def test_reloaded_10k_index_matches_in_memory_oracle(self, tmp_path):
        records = random_records(10_000, 384, seed=13)
        index = build_index(records)
        path = tmp_path / "big.idx"
        index.save(path)
        reloaded = CorpusIndex.load(path)
        dense = reloaded.embeddings.astype(np.float64)
        ids = reloaded.sentence_ids
        rng = np.random.default_rng(14)
        for _ in range(100):
            query = rng.standard_normal(384)
            query /= np.linalg.norm(query)
            scores = dense @ query
            expected = [ids[i] for i in sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))[:5]]
            assert [h.sent_id for h in reloaded.search_exact(query, k=5)] == expected

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.idx"
        path.write_bytes(b"not an index file at all" * 4)
        with pytest.raises(IndexFileError, match="magic"):
            CorpusIndex.load(path)

    def test_truncated_file_rejected(self, tmp_path):
        records = random_records(50, 8, seed=12)
        index = build_index(records)
        path = tmp_path / "t.idx"
        index.save(path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) - 64])
        with pytest.raises(IndexFileError, match="truncated"):
            CorpusIndex.load(path)


class TestRetrieve:
    def _paragraph_fixture(self):
        """Two sentences of paragraph A sit closest to the query; B and C follow."""
        provider = HashedNgramEmbedder(dimension=64, seed=3)
        sentences = [
            ("a1", "pA", "plankton bloom in the spring sea"),
            ("a2", "pA", "the plankton bloom feeds the fishery"),
            ("b1", "pB", "sea level rise drowns the old stairs"),
            ("c1", "pC", "tax law is a dry subject"),
        ]
        records = [
            SentenceRecord(s, p, t, provider.embed(t)) for s, p, t in sentences
        ]
        paragraphs = [
            Paragraph("pA", "d0", "plankton bloom in the spring sea. the plankton bloom feeds the fishery", ["a1", "a2"]),
            Paragraph("pB", "d0", "sea level rise drowns the old stairs", ["b1"]),
            Paragraph("pC", "d0", "tax law is a dry subject", ["c1"]),
        ]
        return build_index(records, paragraphs), provider

    def test_distinct_paragraphs_when_top_sentences_collide(self):
        index, provider = self._paragraph_fixture()
        # both pA sentences outscore everything else for this query
        ranked = index.search_exact(provider.embed("plankton bloom"), k=4)
        assert {ranked[0].para_id, ranked[1].para_id} == {"pA"}
        hits = index.retrieve("plankton bloom", provider, RetrievalConfig(k=2, dimension=64))
        assert len(hits) == 2
        assert hits[0].para_id == "pA"
        assert hits[1].para_id != "pA"
        assert hits[0].paragraph_text.startswith("plankton bloom in the spring sea.")

    def test_single_paragraph_corpus_exhausts(self):
        provider = HashedNgramEmbedder(dimension=64, seed=3)
        records = [
            SentenceRecord("s1", "pA", "one sentence", provider.embed("one sentence")),
            SentenceRecord("s2", "pA", "two sentence", provider.embed("two sentence")),
        ]
        index = build_index(records)
        hits = index.retrieve("sentence", provider, RetrievalConfig(k=2, dimension=64))
        assert len(hits) == 1

    def test_default_k_is_two(self):
        assert RetrievalConfig().k == 2
        assert RetrievalConfig().dimension == 384

    def test_empty_index_returns_empty(self):
        provider = HashedNgramEmbedder(dimension=16, seed=0)
        index = build_index([], dimension=16)
        assert index.retrieve("anything", provider, RetrievalConfig(k=2, dimension=16)) == []

    def test_never_two_hits_same_paragraph(self):
        index, provider = self._paragraph_fixture()
        for query in ["plankton", "sea level", "tax law", "the sea"]:
            hits = index.retrieve(query, provider, RetrievalConfig(k=3, dimension=64))
            para_ids = [h.para_id for h in hits]
            assert len(para_ids) == len(set(para_ids))

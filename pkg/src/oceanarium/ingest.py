"""Corpus ingestion: text files -> documents -> paragraphs -> embedded sentences."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from .chunking import split_paragraphs, split_sentences
from .embedding import EmbeddingProvider
from .vindex import (
    CorpusIndex,
    DocumentKind,
    DocumentRecord,
    Paragraph,
    SentenceRecord,
)

_TEXT_SUFFIXES = {".txt", ".md"}


def _document_kind(path: Path, root: Path) -> DocumentKind:
    """A subdirectory named after a kind tags its documents; default is eco-art-text."""
    for part in path.relative_to(root).parts[:-1]:
        try:
            return DocumentKind(part)
        except ValueError:
            continue
    return DocumentKind.ECO_ART_TEXT


def ingest_corpus(
    corpus_dir: str | Path,
    provider: EmbeddingProvider,
    *,
    embedder_config: dict | None = None,
) -> CorpusIndex:
    """Read every text file under ``corpus_dir`` and build a searchable index."""
    root = Path(corpus_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    paths = sorted(p for p in root.rglob("*") if p.suffix.lower() in _TEXT_SUFFIXES)
    documents: list[DocumentRecord] = []
    paragraphs: list[Paragraph] = []
    records: list[SentenceRecord] = []
    texts: list[str] = []
    slots: list[tuple[str, str, str]] = []  # (sent_id, para_id, text)

    for doc_index, path in enumerate(paths):
        doc_id = f"d{doc_index:04d}-{path.stem}"
        documents.append(
            DocumentRecord(
                doc_id=doc_id,
                title=path.stem.replace("_", " ").replace("-", " "),
                source_path=str(path),
                kind=_document_kind(path, root),
            )
        )
        raw = path.read_text(encoding="utf-8")
        for para_index, para_text in enumerate(split_paragraphs(raw)):
            para_id = f"{doc_id}:p{para_index:04d}"
            sentence_ids: list[str] = []
            for sent_index, sentence in enumerate(split_sentences(para_text)):
                sent_id = f"{para_id}:s{sent_index:02d}"
                sentence_ids.append(sent_id)
                texts.append(sentence)
                slots.append((sent_id, para_id, sentence))
            if sentence_ids:
                paragraphs.append(
                    Paragraph(
                        para_id=para_id,
                        doc_id=doc_id,
                        text=para_text,
                        sentence_ids=sentence_ids,
                    )
                )

    if texts:
        matrix = provider.embed_batch(texts)
        records = [
            SentenceRecord(sent_id=s, para_id=p, text=t, embedding=matrix[i])
            for i, (s, p, t) in enumerate(slots)
        ]
    return CorpusIndex.build(
        records,
        paragraphs,
        documents,
        dimension=provider.dimension,
        embedder_config=embedder_config,
    )


def corpus_stats(index: CorpusIndex) -> dict:
    return {
        "documents": len(index.documents()),
        "paragraphs": index.paragraph_count,
        "sentences": len(index),
        "dimension": index.dimension,
    }


__all__ = ["ingest_corpus", "corpus_stats"]

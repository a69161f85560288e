"""Corpus chunking: paragraphs from raw text, sentences from paragraphs."""

from __future__ import annotations

# Trailing tokens that never end a sentence, compared lowercase and
# including their final period.
ABBREVIATIONS = frozenset(
    {
        "dr.",
        "mr.",
        "mrs.",
        "ms.",
        "prof.",
        "st.",
        "vs.",
        "etc.",
        "e.g.",
        "i.e.",
        "fig.",
        "cf.",
        "al.",
        "approx.",
    }
)

_TERMINALS = ".!?"


def normalize_whitespace(text: str) -> str:
    """Collapse every whitespace run to a single space and trim the ends."""
    return " ".join(text.split())


def split_paragraphs(raw_text: str) -> list[str]:
    """Split text into paragraphs at blank (whitespace-only) lines.

    Paragraphs are maximal runs of non-blank lines, trimmed, in input order.
    Empty runs are dropped, so empty input yields an empty list.
    """
    paragraphs: list[str] = []
    current: list[str] = []
    for line in raw_text.splitlines():
        if line.strip():
            current.append(line)
        elif current:
            paragraphs.append("\n".join(current).strip())
            current = []
    if current:
        paragraphs.append("\n".join(current).strip())
    return paragraphs


def _trailing_token(text: str, dot_index: int) -> str:
    """Return the whitespace-delimited token ending at ``dot_index`` (inclusive)."""
    start = dot_index
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    return text[start : dot_index + 1].lstrip("\"'([{").lower()


def split_sentences(paragraph: str) -> list[str]:
    """Split a paragraph into sentences.

    A sentence ends at a run of ``. ! ?`` followed by whitespace and an
    uppercase letter, or at end of text. A period that completes a known
    abbreviation (``Dr.``, ``e.g.``, ...) never terminates. Segments are
    trimmed; their concatenation reproduces the paragraph modulo whitespace.
    """
    text = paragraph
    n = len(text)
    sentences: list[str] = []
    start = 0
    i = 0
    while i < n:
        if text[i] not in _TERMINALS:
            i += 1
            continue
        run_end = i + 1
        while run_end < n and text[run_end] in _TERMINALS:
            run_end += 1
        nxt = run_end
        while nxt < n and text[nxt].isspace():
            nxt += 1
        boundary = False
        if nxt >= n:
            boundary = True
        elif nxt > run_end and text[nxt].isupper():
            boundary = True
        if (
            boundary
            and text[i] == "."
            and run_end - i == 1
            and _trailing_token(text, i) in ABBREVIATIONS
        ):
            boundary = False
        if boundary and nxt < n:
            segment = text[start:run_end].strip()
            if segment:
                sentences.append(segment)
            start = nxt
            i = nxt
        else:
            i = run_end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences

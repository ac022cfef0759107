"""Lake ingestion: discoverable elements, type inference, tagging, bags.

A lake is a directory with ``tables/*.csv`` and ``docs/*.txt`` plus an
optional ``manifest.json`` mapping file names to titles/sources. Every
column, table and document becomes a discoverable element (DE) with a
stable id derived from its lake-relative location.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .config import EngineConfig
from .errors import EmptyDocument, EmptyTable, MalformedCsv
from .text import STOPWORDS, _cached_stem, metadata_tokens, paragraphs, sentences, tokenize


class DEKind(str, Enum):
    COLUMN = "column"
    TABLE = "table"
    DOCUMENT = "document"


class ColumnType(str, Enum):
    TEXT = "Text"
    NUMERIC = "Numeric"
    DATE = "Date"
    CATEGORICAL = "Categorical"


class TaskTag(str, Enum):
    CROSS_MODAL = "CrossModal"
    KEYWORD_SEARCH = "KeywordSearch"
    PKFK_CANDIDATE = "PkFkCandidate"
    NUMERIC_OVERLAP = "NumericOverlap"


def make_de_id(kind: DEKind, rel_path: str, name: str) -> str:
    """Stable 32-hex-char id from (kind, lake-relative path, name/offset)."""
    payload = f"{kind.value}|{rel_path}|{name}".encode()
    return hashlib.sha256(payload).hexdigest()[:32]


@dataclass
class TableDE:
    id: str
    name: str
    column_ids: tuple[str, ...]
    row_count: int
    rel_path: str = ""


@dataclass
class ColumnDE:
    id: str
    parent_table: str
    name: str
    values: tuple[str, ...]
    inferred_type: ColumnType = ColumnType.TEXT
    tags: frozenset[TaskTag] = frozenset()

    @property
    def non_empty(self) -> list[str]:
        return [v for v in self.values if v != ""]

    @property
    def distinct_count(self) -> int:
        return len(set(self.non_empty))

    @property
    def value_count(self) -> int:
        return len(self.non_empty)


@dataclass
class DocumentDE:
    id: str
    title: str
    source: str
    raw_text: str
    parent_doc: str | None = None
    rel_path: str = ""

    @property
    def word_count(self) -> int:
        return len(self.raw_text.split())


@dataclass
class BagOfWords:
    owner: str
    tokens: Counter = field(default_factory=Counter)

    @property
    def distinct_count(self) -> int:
        return len(self.tokens)

    @property
    def total(self) -> int:
        return sum(self.tokens.values())


# ---------------------------------------------------------------------------
# type inference

_DATE_PATTERNS = (
    re.compile(r"^\d{4}-\d{2}-\d{2}([T ]\d{2}:\d{2}(:\d{2})?)?$"),
    re.compile(r"^\d{1,2}/\d{1,2}/\d{4}$"),
    re.compile(r"^\d{1,2}-\d{1,2}-\d{4}$"),
    re.compile(r"^\d{4}/\d{2}/\d{2}$"),
)


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def _is_date(cell: str) -> bool:
    return any(p.match(cell) for p in _DATE_PATTERNS)


def infer_column_type(values: tuple[str, ...], config: EngineConfig) -> ColumnType:
    non_empty = [v for v in values if v != ""]
    if not non_empty:
        return ColumnType.TEXT
    threshold = config.type_inference_threshold
    n = len(non_empty)
    if sum(_is_number(v) for v in non_empty) / n >= threshold:
        return ColumnType.NUMERIC
    if sum(_is_date(v) for v in non_empty) / n >= threshold:
        return ColumnType.DATE
    row_count = len(values)
    if row_count and len(set(non_empty)) / row_count < config.categorical_ratio:
        return ColumnType.CATEGORICAL
    return ColumnType.TEXT


def tag_column(column: ColumnDE, config: EngineConfig) -> frozenset[TaskTag]:
    """Pure function of (inferred_type, distinct ratio, mean cell length)."""
    tags: set[TaskTag] = set()
    non_empty = column.non_empty
    if not non_empty:
        return frozenset()
    row_count = len(column.values)
    distinct_ratio = len(set(non_empty)) / row_count if row_count else 0.0
    mean_len = sum(len(v) for v in non_empty) / len(non_empty)
    if column.inferred_type == ColumnType.TEXT and distinct_ratio >= config.categorical_ratio:
        tags.add(TaskTag.CROSS_MODAL)
        tags.add(TaskTag.KEYWORD_SEARCH)
    if column.inferred_type != ColumnType.DATE and mean_len <= config.long_text_chars:
        tags.add(TaskTag.PKFK_CANDIDATE)
    if column.inferred_type == ColumnType.NUMERIC:
        tags.add(TaskTag.NUMERIC_OVERLAP)
    return frozenset(tags)


# ---------------------------------------------------------------------------
# ingestion

def ingest_table(
    csv_source: str | io.TextIOBase,
    table_name: str,
    rel_path: str,
    config: EngineConfig,
) -> tuple[TableDE, list[ColumnDE]]:
    if isinstance(csv_source, str):
        csv_source = io.StringIO(csv_source)
    rows = list(csv.reader(csv_source))
    if not rows:
        raise EmptyTable(f"{table_name}: no header row")
    header = [h.strip() for h in rows[0]]
    if not header or all(h == "" for h in header):
        raise MalformedCsv(f"{table_name}: empty header")
    data = rows[1:]
    if not data:
        raise EmptyTable(f"{table_name}: no data rows")
    width = len(header)
    for i, row in enumerate(data):
        if len(row) != width:
            raise MalformedCsv(f"{table_name}: row {i + 2} has {len(row)} cells, expected {width}")

    table_id = make_de_id(DEKind.TABLE, rel_path, table_name)
    columns: list[ColumnDE] = []
    for j, col_name in enumerate(header):
        values = tuple(row[j].strip() for row in data)
        col = ColumnDE(
            id=make_de_id(DEKind.COLUMN, rel_path, col_name),
            parent_table=table_id,
            name=col_name,
            values=values,
        )
        col.inferred_type = infer_column_type(values, config)
        col.tags = tag_column(col, config)
        columns.append(col)
    table = TableDE(
        id=table_id,
        name=table_name,
        column_ids=tuple(c.id for c in columns),
        row_count=len(data),
        rel_path=rel_path,
    )
    return table, columns


def _pack_units(units: list[str], max_words: int) -> list[str]:
    """Greedy-pack text units into chunks of at most max_words words."""
    chunks: list[str] = []
    current: list[str] = []
    count = 0
    for unit in units:
        n = len(unit.split())
        if current and count + n > max_words:
            chunks.append("\n\n".join(current))
            current, count = [], 0
        current.append(unit)
        count += n
    if current:
        chunks.append("\n\n".join(current))
    return chunks


def _split_oversized(unit: str, max_words: int) -> list[str]:
    """Split one oversized paragraph at sentence boundaries, then hard-split
    any sentence still longer than max_words."""
    pieces: list[str] = []
    for sent in sentences(unit):
        words = sent.split()
        if len(words) <= max_words:
            pieces.append(sent)
        else:
            for i in range(0, len(words), max_words):
                pieces.append(" ".join(words[i : i + max_words]))
    return pieces


def ingest_document(
    text_source: str,
    title: str,
    rel_path: str,
    config: EngineConfig,
    source: str = "",
) -> list[DocumentDE]:
    text = text_source.strip()
    if not text:
        raise EmptyDocument(f"{rel_path}: empty document")
    max_words = config.max_de_words
    if len(text.split()) <= max_words:
        return [
            DocumentDE(
                id=make_de_id(DEKind.DOCUMENT, rel_path, "0"),
                title=title,
                source=source,
                raw_text=text,
                rel_path=rel_path,
            )
        ]
    units: list[str] = []
    for para in paragraphs(text):
        if len(para.split()) <= max_words:
            units.append(para)
        else:
            units.extend(_split_oversized(para, max_words))
    chunks = _pack_units(units, max_words)
    parent_id = make_de_id(DEKind.DOCUMENT, rel_path, "parent")
    docs = []
    for i, chunk in enumerate(chunks):
        docs.append(
            DocumentDE(
                id=make_de_id(DEKind.DOCUMENT, rel_path, str(i)),
                title=f"{title} [part {i + 1}]" if title else title,
                source=source,
                raw_text=chunk,
                parent_doc=parent_id,
                rel_path=rel_path,
            )
        )
    return docs


def raw_document_tokens(text: str) -> list[str]:
    """Pre-df-filter document pipeline: tokenize, stopword-filter, stem."""
    return [_cached_stem(t) for t in tokenize(text) if t not in STOPWORDS]


def preprocess_document(
    doc: DocumentDE,
    df_table: dict[str, int],
    n_docs: int,
    config: EngineConfig,
) -> BagOfWords:
    """Bag of words with tokens above the corpus df cutoff dropped."""
    cutoff = config.df_cutoff
    counts = Counter(raw_document_tokens(doc.raw_text))
    kept = {
        t: c
        for t, c in counts.items()
        if n_docs == 0 or df_table.get(t, 0) / n_docs <= cutoff
    }
    return BagOfWords(owner=doc.id, tokens=Counter(kept))


# ---------------------------------------------------------------------------
# corpus container

@dataclass
class Corpus:
    tables: dict[str, TableDE] = field(default_factory=dict)
    columns: dict[str, ColumnDE] = field(default_factory=dict)
    documents: dict[str, DocumentDE] = field(default_factory=dict)
    bags: dict[str, BagOfWords] = field(default_factory=dict)
    df_table: dict[str, int] = field(default_factory=dict)
    lake_root: str = ""

    @property
    def n_docs(self) -> int:
        return len(self.documents)

    def add_table(self, table: TableDE, columns: list[ColumnDE]) -> None:
        self.tables[table.id] = table
        for col in columns:
            self.columns[col.id] = col

    def add_documents(self, docs: list[DocumentDE]) -> None:
        for d in docs:
            self.documents[d.id] = d

    def finalize(self, config: EngineConfig) -> None:
        """Second sequential pass: corpus document frequencies, then bags."""
        df: Counter = Counter()
        token_sets: dict[str, set[str]] = {}
        for doc_id in sorted(self.documents):
            toks = set(raw_document_tokens(self.documents[doc_id].raw_text))
            token_sets[doc_id] = toks
            df.update(toks)
        self.df_table = dict(sorted(df.items()))
        for doc_id in sorted(self.documents):
            self.bags[doc_id] = preprocess_document(
                self.documents[doc_id], self.df_table, self.n_docs, config
            )

    def columns_tagged(self, tag: TaskTag) -> list[ColumnDE]:
        return [self.columns[c] for c in sorted(self.columns) if tag in self.columns[c].tags]

    def table_of(self, column_id: str) -> TableDE:
        return self.tables[self.columns[column_id].parent_table]

    def document_metadata_tokens(self, doc: DocumentDE) -> list[str]:
        return metadata_tokens(doc.title, doc.source)

    def column_metadata_tokens(self, col: ColumnDE) -> list[str]:
        table = self.tables[col.parent_table]
        return metadata_tokens(table.name, col.name)


def load_lake(lake_root: str | Path, config: EngineConfig) -> Corpus:
    root = Path(lake_root)
    if not root.is_dir():
        raise FileNotFoundError(f"lake root not found: {root}")
    manifest: dict = {}
    manifest_path = root / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())

    corpus = Corpus(lake_root=str(root))
    tables_dir = root / "tables"
    if tables_dir.is_dir():
        for csv_path in sorted(tables_dir.glob("*.csv")):
            rel = csv_path.relative_to(root).as_posix()
            entry = manifest.get(rel, {})
            name = entry.get("title", csv_path.stem)
            with csv_path.open(newline="") as fh:
                table, cols = ingest_table(fh, name, rel, config)
            corpus.add_table(table, cols)
    docs_dir = root / "docs"
    if docs_dir.is_dir():
        for txt_path in sorted(docs_dir.glob("*.txt")):
            rel = txt_path.relative_to(root).as_posix()
            entry = manifest.get(rel, {})
            title = entry.get("title", txt_path.stem)
            source = entry.get("source", "")
            docs = ingest_document(txt_path.read_text(), title, rel, config, source=source)
            corpus.add_documents(docs)
    corpus.finalize(config)
    return corpus


# ---------------------------------------------------------------------------
# catalog snapshot

CATALOG_VERSION = 1


def catalog_dict(corpus: Corpus, config: EngineConfig, sample_values: int = 8) -> dict:
    tables = [
        {
            "id": t.id,
            "name": t.name,
            "rel_path": t.rel_path,
            "column_ids": list(t.column_ids),
            "row_count": t.row_count,
        }
        for t in (corpus.tables[k] for k in sorted(corpus.tables))
    ]
    columns = [
        {
            "id": c.id,
            "name": c.name,
            "parent_table": c.parent_table,
            "inferred_type": c.inferred_type.value,
            "tags": sorted(t.value for t in c.tags),
            "row_count": len(c.values),
            "value_count": c.value_count,
            "distinct_count": c.distinct_count,
            "sample_values": list(dict.fromkeys(c.non_empty))[:sample_values],
        }
        for c in (corpus.columns[k] for k in sorted(corpus.columns))
    ]
    documents = [
        {
            "id": d.id,
            "title": d.title,
            "source": d.source,
            "rel_path": d.rel_path,
            "parent_doc": d.parent_doc,
            "word_count": d.word_count,
            "snippet": d.raw_text[:240],
            "bag_distinct": corpus.bags[d.id].distinct_count if d.id in corpus.bags else 0,
        }
        for d in (corpus.documents[k] for k in sorted(corpus.documents))
    ]
    return {
        "version": CATALOG_VERSION,
        "lake_root": corpus.lake_root,
        "config_fingerprint": config.fingerprint(),
        "n_docs": corpus.n_docs,
        "tables": tables,
        "columns": columns,
        "documents": documents,
        "df_table": corpus.df_table,
    }


def save_catalog(corpus: Corpus, config: EngineConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(catalog_dict(corpus, config), sort_keys=True))


def load_catalog(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def catalog_fingerprint(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def mean_or_zero(xs: list[float]) -> float:
    return math.fsum(xs) / len(xs) if xs else 0.0

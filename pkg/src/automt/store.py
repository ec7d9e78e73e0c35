"""Persistent MR table with execution counts and exact cosine retrieval."""

from __future__ import annotations

import csv
import os
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import BackendEndpoint, embed
from .errors import DimensionMismatch, UnknownIndex
from .ontology import Verb
from .relations import MetamorphicRelation, mr_to_record, render_gherkin

_MAGIC = b"AUTOMTV1"

CSV_COLUMNS = (
    "Index",
    "MR",
    "RoadType",
    "Manipulation",
    "ExpectedBehavior",
    "ExecutionCount",
    "Region",
    "SourceRule",
    "HallucinationScore",
)


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("\n", "\\n")


def _unescape(text: str) -> str:
    out, i = [], 0
    while i < len(text):
        if text[i] == "\\" and i + 1 < len(text):
            out.append("\n" if text[i + 1] == "n" else text[i + 1])
            i += 2
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


@dataclass
class StoredMr:
    index: int
    mr: MetamorphicRelation
    embedding: np.ndarray  # float32, unit norm
    execution_count: int = 0


@dataclass(frozen=True)
class RetrievalQuery:
    text: str
    top_k: int = 5

    def __post_init__(self):
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


class MrStore:
    """In-memory MR table; optionally bound to an on-disk directory."""

    def __init__(self, entries: list[StoredMr], dim: int, path: Path | None = None):
        self.entries = entries
        self.dim = dim
        self.path = Path(path) if path else None
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, index: int) -> StoredMr:
        if not 0 <= index < len(self.entries):
            raise UnknownIndex(f"no stored MR with index {index}")
        return self.entries[index]

    def record_execution(self, index: int) -> int:
        """Increment one MR's usage count; persists when disk-bound."""
        with self._lock:
            entry = self.get(index)
            entry.execution_count += 1
            count = entry.execution_count
            if self.path is not None:
                self._save_locked(self.path)
        return count

    # --- persistence (CSV table + binary embedding sidecar) ---

    def save(self, directory: str | Path) -> None:
        with self._lock:
            self._save_locked(Path(directory))
        self.path = Path(directory)

    def _save_locked(self, directory: Path) -> None:
        directory.mkdir(parents=True, exist_ok=True)
        csv_tmp = directory / "mrs.csv.tmp"
        with csv_tmp.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_COLUMNS)
            for entry in self.entries:
                mr = entry.mr
                writer.writerow(
                    (
                        entry.index,
                        _escape(render_gherkin(mr)),
                        mr.road_type,
                        mr.manipulation,
                        mr.expected_behavior,
                        entry.execution_count,
                        mr.region,
                        _escape(mr.source_rule),
                        repr(mr.hallucination_score),
                    )
                )
        os.replace(csv_tmp, directory / "mrs.csv")
        bin_tmp = directory / "embeddings.bin.tmp"
        matrix = np.stack([e.embedding for e in self.entries]).astype("<f4")
        with bin_tmp.open("wb") as handle:
            handle.write(_MAGIC)
            handle.write(struct.pack("<II", self.dim, len(self.entries)))
            handle.write(matrix.tobytes())
        os.replace(bin_tmp, directory / "embeddings.bin")

    @classmethod
    def load(cls, directory: str | Path) -> "MrStore":
        directory = Path(directory)
        with (directory / "embeddings.bin").open("rb") as handle:
            magic = handle.read(8)
            if magic != _MAGIC:
                raise ValueError(f"bad sidecar magic: {magic!r}")
            dim, rows = struct.unpack("<II", handle.read(8))
            matrix = np.frombuffer(handle.read(), dtype="<f4").reshape(rows, dim)
        entries = []
        with (directory / "mrs.csv").open("r", encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            if tuple(header) != CSV_COLUMNS:
                raise ValueError(f"unexpected CSV columns: {header}")
            for row in reader:
                index = int(row[0])
                gherkin = _unescape(row[1])
                verb = Verb.REPLACES if " replaces " in gherkin.splitlines()[1] else Verb.ADDS
                mr = MetamorphicRelation(
                    road_type=row[2],
                    verb=verb,
                    manipulation=row[3],
                    expected_behavior=row[4],
                    region=row[6],
                    source_rule=_unescape(row[7]),
                    hallucination_score=float(row[8]),
                )
                entries.append(StoredMr(index, mr, matrix[index].copy(), int(row[5])))
        if len(entries) != rows:
            raise ValueError(f"CSV rows ({len(entries)}) != sidecar rows ({rows})")
        return cls(entries, dim, path=directory)


def _unit(vector: Sequence[float]) -> np.ndarray:
    arr = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(arr))
    if norm == 0.0:
        raise ValueError("embedding backend returned a zero vector")
    return (arr / norm).astype(np.float32)


def embedding_text(mr: MetamorphicRelation, mode: str = "gherkin") -> str:
    """Text embedded per MR: the Gherkin string, or the structured record."""
    if mode == "gherkin":
        return render_gherkin(mr)
    if mode == "record":
        record = mr_to_record(mr)
        return " | ".join(f"{k}: {record[k]}" for k in sorted(record))
    raise ValueError(f"unknown embedding text mode: {mode!r}")


def build_store(
    mrs: Sequence[MetamorphicRelation],
    embed_backend: BackendEndpoint,
    text_mode: str = "gherkin",
) -> MrStore:
    """Index MRs from 0, embed their text, and normalize to unit vectors."""
    if not mrs:
        raise ValueError("cannot build a store from zero MRs")
    texts = [embedding_text(mr, text_mode) for mr in mrs]
    vectors = embed(embed_backend, texts)
    dims = {len(v) for v in vectors}
    if len(dims) != 1:
        raise DimensionMismatch(f"inconsistent vector lengths: {sorted(dims)}")
    entries = [
        StoredMr(index, mr, _unit(vector)) for index, (mr, vector) in enumerate(zip(mrs, vectors))
    ]
    return MrStore(entries, dims.pop())


def rank_unit_query(store: MrStore, q: np.ndarray) -> list[tuple[StoredMr, float]]:
    """Full store ranking against a unit query vector.

    Order: similarity descending, execution count ascending, index ascending.
    For unit vectors cosine similarity equals the dot product.
    """
    similarities = [float(np.dot(entry.embedding, q)) for entry in store.entries]
    order = sorted(
        range(len(store)),
        key=lambda i: (-similarities[i], store.entries[i].execution_count, i),
    )
    return [(store.entries[i], similarities[i]) for i in order]


def retrieve(
    store: MrStore, query: RetrievalQuery, embed_backend: BackendEndpoint
) -> list[tuple[StoredMr, float]]:
    """Top-k by cosine similarity; ties by execution count, then index."""
    if len(store) == 0:
        raise ValueError("cannot retrieve from an empty store")
    vector = embed(embed_backend, [query.text])[0]
    if len(vector) != store.dim:
        raise DimensionMismatch(f"query dim {len(vector)} != store dim {store.dim}")
    return rank_unit_query(store, _unit(vector))[: query.top_k]

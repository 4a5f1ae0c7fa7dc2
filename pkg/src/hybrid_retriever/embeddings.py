"""Word-embedding tables in the plain text format: header line "count dim",
then one token followed by dim reals per line. Query-side and doc-side
tables are loaded separately."""

from __future__ import annotations

import numpy as np


class EmbeddingTable:
    def __init__(self, dim: int, vectors: dict[str, np.ndarray] | None = None):
        self.dim = dim
        self.vectors: dict[str, np.ndarray] = {}
        if vectors:
            for tok, vec in vectors.items():
                self.add(tok, vec)

    def add(self, token: str, vec) -> None:
        arr = np.asarray(vec, dtype=np.float32)
        if arr.shape != (self.dim,):
            raise ValueError(f"embedding for {token!r} has shape {arr.shape}, "
                             f"table dimension is {self.dim}")
        self.vectors[token] = arr

    def get(self, token: str) -> np.ndarray | None:
        return self.vectors.get(token)

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.vectors)} {self.dim}\n")
            for tok in self.vectors:
                vals = " ".join(repr(float(x)) for x in self.vectors[tok])
                fh.write(f"{tok} {vals}\n")

    @classmethod
    def load(cls, path: str) -> "EmbeddingTable":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise ValueError(f"{path}: first line must be 'count dim'")
            count, dim = int(header[0]), int(header[1])
            table = cls(dim)
            for line_no, line in enumerate(fh, start=2):
                parts = line.rstrip("\n").split(" ")
                if len(parts) != dim + 1:
                    raise ValueError(f"{path}:{line_no}: expected token + {dim} values")
                table.add(parts[0], np.array([float(x) for x in parts[1:]],
                                             dtype=np.float32))
            if len(table) != count:
                raise ValueError(f"{path}: header says {count} vectors, "
                                 f"found {len(table)}")
            return table

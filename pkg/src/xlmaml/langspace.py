"""Language vectors, hierarchical clustering and centroid selection.

Languages are points in a typological vector space. They are grouped by
agglomerative clustering under cosine distance, and each cluster is
represented by the member with the smallest summed distance to the rest.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

LINKAGES = ("average", "complete", "single")
TIE_TOL = 1e-12


class LanguageSpaceError(ValueError):
    """Malformed or inconsistent language-vector input."""


@dataclass(frozen=True)
class LanguageSpace:
    vectors: dict[str, np.ndarray]
    dimension: int

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise LanguageSpaceError("dimension must be >= 1")
        for code, vec in self.vectors.items():
            if vec.shape != (self.dimension,):
                raise LanguageSpaceError(
                    f"vector for {code!r} has shape {vec.shape}, expected ({self.dimension},)"
                )
            if not np.all(np.isfinite(vec)):
                raise LanguageSpaceError(f"vector for {code!r} has non-finite entries")
            if not np.any(vec):
                raise LanguageSpaceError(f"vector for {code!r} is the zero vector")

    @classmethod
    def from_mapping(cls, vectors: dict[str, Sequence[float]]) -> "LanguageSpace":
        if not vectors:
            raise LanguageSpaceError("empty language space")
        arrays = {code: np.asarray(v, dtype=np.float64) for code, v in vectors.items()}
        dims = {a.shape for a in arrays.values()}
        if len(dims) != 1 or len(next(iter(dims))) != 1:
            raise LanguageSpaceError(f"inconsistent vector shapes: {sorted(dims)}")
        return cls(arrays, next(iter(dims))[0])

    @property
    def codes(self) -> list[str]:
        return sorted(self.vectors)

    def __contains__(self, code: str) -> bool:
        return code in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)


@dataclass
class Cluster:
    members: list[str]
    centroid: str | None = None

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("cluster must have at least one member")
        if self.centroid is not None and self.centroid not in self.members:
            raise ValueError(f"centroid {self.centroid!r} is not a member")


@dataclass
class ClusterSet:
    clusters: list[Cluster]
    # languages placed by hand rather than by their vectors
    unrepresented: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        if not self.clusters:
            raise ValueError("a cluster set needs at least one cluster")
        seen: set[str] = set()
        for c in self.clusters:
            overlap = seen.intersection(c.members)
            if overlap:
                raise ValueError(f"languages in more than one cluster: {sorted(overlap)}")
            seen.update(c.members)

    @property
    def k(self) -> int:
        return len(self.clusters)

    @property
    def languages(self) -> list[str]:
        return sorted(code for c in self.clusters for code in c.members)

    @property
    def centroids(self) -> list[str]:
        return [c.centroid for c in self.clusters if c.centroid is not None]

    def cluster_of(self, code: str) -> int:
        for i, c in enumerate(self.clusters):
            if code in c.members:
                return i
        raise KeyError(code)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "clusters": [{"members": list(c.members), "centroid": c.centroid} for c in self.clusters],
            "unrepresented": sorted(self.unrepresented),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ClusterSet":
        clusters = [Cluster(list(c["members"]), c.get("centroid")) for c in payload["clusters"]]
        out = cls(clusters, set(payload.get("unrepresented", ())))
        if "k" in payload and payload["k"] != out.k:
            raise ValueError(f"k={payload['k']} disagrees with {out.k} clusters")
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ClusterSet":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _parse_floats(values: Iterable[object], where: str) -> list[float]:
    out = []
    for v in values:
        try:
            x = float(v)  # type: ignore[arg-type]
        except (TypeError, ValueError):
            raise LanguageSpaceError(f"{where}: non-numeric value {v!r}") from None
        if not math.isfinite(x):
            raise LanguageSpaceError(f"{where}: non-finite value {v!r}")
        out.append(x)
    return out


def load_language_vectors(path: str | Path, format: str | None = None) -> LanguageSpace:
    """Read a vector file with one record per language.

    CSV files carry a ``code,v0,...,vD-1`` header; JSONL records look like
    ``{"code": "hi", "vector": [...]}``. The format is inferred from the
    suffix when not given.
    """
    path = Path(path)
    if format is None:
        format = "jsonl" if path.suffix in (".jsonl", ".json") else "csv"
    if format not in ("csv", "jsonl"):
        raise LanguageSpaceError(f"unknown vector format {format!r}")

    rows: list[tuple[str, list[float], str]] = []
    with path.open(encoding="utf-8", newline="") as fh:
        if format == "csv":
            reader = csv.reader(fh)
            header = next(reader, None)
            if not header or header[0].strip() != "code":
                raise LanguageSpaceError(f"{path}: missing 'code,v0,...' header")
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not cell.strip() for cell in row):
                    continue
                where = f"{path}:{lineno}"
                if len(row) != len(header):
                    raise LanguageSpaceError(f"{where}: expected {len(header)} fields, got {len(row)}")
                rows.append((row[0].strip(), _parse_floats(row[1:], where), where))
        else:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                where = f"{path}:{lineno}"
                try:
                    rec = json.loads(line)
                    code, vec = rec["code"], rec["vector"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise LanguageSpaceError(f"{where}: malformed record ({exc})") from None
                if not isinstance(code, str) or not isinstance(vec, list):
                    raise LanguageSpaceError(f"{where}: malformed record")
                rows.append((code, _parse_floats(vec, where), where))

    if not rows:
        raise LanguageSpaceError(f"{path}: no language vectors")
    vectors: dict[str, list[float]] = {}
    dim = len(rows[0][1])
    for code, vec, where in rows:
        if not code:
            raise LanguageSpaceError(f"{where}: empty language code")
        if code in vectors:
            raise LanguageSpaceError(f"{where}: duplicate language code {code!r}")
        if len(vec) != dim or dim == 0:
            raise LanguageSpaceError(f"{where}: expected {dim} values, got {len(vec)}")
        if not any(vec):
            raise LanguageSpaceError(f"{where}: zero vector for {code!r}")
        vectors[code] = vec
    return LanguageSpace.from_mapping(vectors)


def cosine_distance(a: Sequence[float] | np.ndarray, b: Sequence[float] | np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine distance is undefined for a zero vector")
    sim = float(np.dot(a, b)) / (na * nb)
    return float(1.0 - min(1.0, max(-1.0, sim)))


def distance_matrix(space: LanguageSpace, codes: Sequence[str]) -> np.ndarray:
    n = len(codes)
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = cosine_distance(space.vectors[codes[i]], space.vectors[codes[j]])
    return out


def cluster_languages(space: LanguageSpace, k: int, linkage: str = "average") -> ClusterSet:
    """Agglomerative clustering cut at exactly ``k`` clusters.

    Merge order is fully deterministic: among equally close pairs the one
    whose (smallest member, smallest member) codes sort first is merged.
    Clusters come back ordered by their smallest member code.
    """
    if linkage not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}, got {linkage!r}")
    codes = space.codes
    n = len(codes)
    if n < 1:
        raise ValueError("no languages to cluster")
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must be between 1 and the number of languages ({n})")

    dist = distance_matrix(space, codes)
    groups: list[list[int]] = [[i] for i in range(n)]

    def link(ga: list[int], gb: list[int]) -> float:
        block = dist[np.ix_(ga, gb)]
        if linkage == "average":
            return float(block.mean())
        if linkage == "complete":
            return float(block.max())
        return float(block.min())

    while len(groups) > k:
        best: tuple[float, str, str, int, int] | None = None
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                d = link(groups[i], groups[j])
                ka, kb = sorted((codes[min(groups[i])], codes[min(groups[j])]))
                if best is None or d < best[0] - TIE_TOL or (
                    abs(d - best[0]) <= TIE_TOL and (ka, kb) < (best[1], best[2])
                ):
                    best = (d, ka, kb, i, j)
        assert best is not None
        _, _, _, i, j = best
        merged = sorted(groups[i] + groups[j])
        groups = [g for idx, g in enumerate(groups) if idx not in (i, j)] + [merged]

    groups.sort(key=min)
    return ClusterSet([Cluster([codes[i] for i in g]) for g in groups])


def centroid(cluster: Cluster, space: LanguageSpace) -> str:
    """Member minimising the summed cosine distance to the other members.

    Members without a vector (placed by hand) neither vote nor qualify.
    Sets ``cluster.centroid`` and returns it.
    """
    represented = sorted(m for m in cluster.members if m in space)
    if not represented:
        missing = sorted(cluster.members)
        raise KeyError(f"no cluster member has a vector: {missing}")
    best_code, best_total = None, math.inf
    for cand in represented:
        total = sum(cosine_distance(space.vectors[other], space.vectors[cand]) for other in represented)
        if total < best_total - TIE_TOL:
            best_code, best_total = cand, total
    cluster.centroid = best_code
    return best_code  # type: ignore[return-value]


def assign_centroids(clusters: ClusterSet, space: LanguageSpace) -> ClusterSet:
    for c in clusters.clusters:
        centroid(c, space)
    return clusters


def assign_unrepresented(clusters: ClusterSet, lang: str, cluster_index: int) -> ClusterSet:
    """Place a language that has no vector into cluster ``cluster_index`` (0-based)."""
    if any(lang in c.members for c in clusters.clusters):
        raise ValueError(f"{lang!r} is already clustered")
    if not 0 <= cluster_index < clusters.k:
        raise IndexError(f"cluster index {cluster_index} out of range for k={clusters.k}")
    clusters.clusters[cluster_index].members.append(lang)
    clusters.unrepresented.add(lang)
    return clusters


def mean_distance_to_centroid(cluster: Cluster, space: LanguageSpace) -> dict[str, float]:
    """Per-member mean cosine distance to the rest of the cluster (a text report aid)."""
    represented = sorted(m for m in cluster.members if m in space)
    out = {}
    for m in represented:
        others = [o for o in represented if o != m]
        out[m] = (
            sum(cosine_distance(space.vectors[m], space.vectors[o]) for o in others) / len(others)
            if others
            else 0.0
        )
    return out


def format_report(clusters: ClusterSet, space: LanguageSpace) -> str:
    lines = [f"k={clusters.k}"]
    for i, c in enumerate(clusters.clusters):
        means = mean_distance_to_centroid(c, space)
        lines.append(f"cluster {i} ({len(c.members)}): centroid={c.centroid}")
        for m in sorted(c.members, key=lambda x: (means.get(x, math.inf), x)):
            shown = f"{means[m]:.3f}" if m in means else "-"
            lines.append(f"  {m:<8} mean_cd={shown}")
    return "\n".join(lines)

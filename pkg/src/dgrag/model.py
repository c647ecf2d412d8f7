"""Core domain types, system configuration, and validation.

Everything here is a plain value object: build it, validate it, pass it
around. Mutation after construction is not supported anywhere downstream.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field, asdict
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError

VECTOR_DTYPE = np.dtype("<f4")  # little-endian float32, also the on-disk format
UNIT_NORM_TOL = 1e-6


def normalize_entity_name(raw: str) -> str:
    """Casefold, collapse internal whitespace, and trim. Idempotent."""
    return " ".join(raw.split()).casefold()


def count_tokens(text: str) -> int:
    """Whitespace-delimited token count (mock-mode tokenization)."""
    return len(text.split())


def as_unit_vector(values, dim: int | None = None) -> np.ndarray:
    """Coerce to a read-only float32 array and check unit norm."""
    vec = np.asarray(values, dtype=VECTOR_DTYPE)
    if vec.ndim != 1:
        raise ValueError(f"expected 1-d vector, got shape {vec.shape}")
    if dim is not None and vec.shape[0] != dim:
        raise ValueError(f"expected dimension {dim}, got {vec.shape[0]}")
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"vector norm {norm} is not 1 within {UNIT_NORM_TOL}")
    vec.flags.writeable = False
    return vec


def vector_to_b64(vec: np.ndarray) -> str:
    return base64.b64encode(np.asarray(vec, dtype=VECTOR_DTYPE).tobytes()).decode("ascii")


def vector_from_b64(data: str) -> np.ndarray:
    vec = np.frombuffer(base64.b64decode(data), dtype=VECTOR_DTYPE).copy()
    vec.flags.writeable = False
    return vec


# ---------------------------------------------------------------------------
# Knowledge types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Chunk:
    id: str
    doc_id: str
    index: int
    text: str
    token_count: int

    def check(self) -> None:
        if not self.text:
            raise ValueError(f"chunk {self.id}: empty text")
        if self.index < 0:
            raise ValueError(f"chunk {self.id}: negative index")
        if self.token_count <= 0:
            raise ValueError(f"chunk {self.id}: token_count must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "Chunk":
        return Chunk(d["id"], d["doc_id"], int(d["index"]), d["text"], int(d["token_count"]))


@dataclass(frozen=True)
class Entity:
    id: str
    name: str
    type_label: str
    description: str
    source_chunk_ids: frozenset[str]

    def check(self) -> None:
        if not self.name:
            raise ValueError(f"entity {self.id}: empty name")
        if self.name != normalize_entity_name(self.name):
            raise ValueError(f"entity {self.id}: name not normalized: {self.name!r}")
        if not self.source_chunk_ids:
            raise ValueError(f"entity {self.id}: no source chunks")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["source_chunk_ids"] = sorted(self.source_chunk_ids)
        return d

    @staticmethod
    def from_dict(d: dict) -> "Entity":
        return Entity(d["id"], d["name"], d["type_label"], d["description"],
                      frozenset(d["source_chunk_ids"]))


@dataclass(frozen=True)
class Relation:
    id: str
    src: str
    dst: str
    description: str
    keywords: tuple[str, ...]
    source_chunk_ids: frozenset[str]

    def check(self) -> None:
        if self.src == self.dst:
            raise ValueError(f"relation {self.id}: self loop on {self.src}")
        if not self.source_chunk_ids:
            raise ValueError(f"relation {self.id}: no source chunks")

    def endpoints(self) -> frozenset[str]:
        return frozenset((self.src, self.dst))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["keywords"] = list(self.keywords)
        d["source_chunk_ids"] = sorted(self.source_chunk_ids)
        return d

    @staticmethod
    def from_dict(d: dict) -> "Relation":
        return Relation(d["id"], d["src"], d["dst"], d["description"],
                        tuple(d["keywords"]), frozenset(d["source_chunk_ids"]))


@dataclass
class KnowledgeGraph:
    entities: dict[str, Entity] = field(default_factory=dict)
    relations: dict[str, Relation] = field(default_factory=dict)

    def check(self) -> None:
        seen_triples: set[tuple] = set()
        for ent_id, ent in self.entities.items():
            if ent.id != ent_id:
                raise ValueError(f"entity keyed as {ent_id} but carries id {ent.id}")
            ent.check()
        for rel_id, rel in self.relations.items():
            if rel.id != rel_id:
                raise ValueError(f"relation keyed as {rel_id} but carries id {rel.id}")
            rel.check()
            if rel.src not in self.entities or rel.dst not in self.entities:
                raise ValueError(f"relation {rel_id}: dangling endpoint")
            triple = (frozenset((rel.src, rel.dst)), rel.description)
            if triple in seen_triples:
                raise ValueError(f"relation {rel_id}: duplicate (src,dst,description)")
            seen_triples.add(triple)

    def entity_by_name(self, name: str) -> Entity | None:
        wanted = normalize_entity_name(name)
        for ent in self.entities.values():
            if ent.name == wanted:
                return ent
        return None


@dataclass
class Partition:
    assignment: dict[str, int]

    @property
    def community_count(self) -> int:
        return len(set(self.assignment.values())) if self.assignment else 0

    def communities(self) -> dict[int, list[str]]:
        """Community id -> sorted member entity ids."""
        out: dict[int, list[str]] = {}
        for node, comm in self.assignment.items():
            out.setdefault(comm, []).append(node)
        for members in out.values():
            members.sort()
        return out

    def check(self, entity_ids) -> None:
        ids = set(entity_ids)
        if set(self.assignment) != ids:
            raise ValueError("partition is not total over the entity set")
        comms = sorted(set(self.assignment.values()))
        if comms and comms != list(range(len(comms))):
            raise ValueError(f"community ids not dense from 0: {comms}")


@dataclass(frozen=True)
class SubgraphSummary:
    id: str
    edge_id: str
    community_id: int
    text: str
    embedding: np.ndarray
    entity_count: int
    relation_count: int

    def check(self) -> None:
        if not self.text:
            raise ValueError(f"summary {self.id}: empty text")
        as_unit_vector(self.embedding)
        if self.entity_count < 0 or self.relation_count < 0:
            raise ValueError(f"summary {self.id}: negative counts")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "edge_id": self.edge_id,
            "community_id": self.community_id,
            "text": self.text,
            "embedding": vector_to_b64(self.embedding),
            "entity_count": self.entity_count,
            "relation_count": self.relation_count,
        }

    @staticmethod
    def from_dict(d: dict) -> "SubgraphSummary":
        return SubgraphSummary(d["id"], d["edge_id"], int(d["community_id"]), d["text"],
                               vector_from_b64(d["embedding"]),
                               int(d["entity_count"]), int(d["relation_count"]))


@dataclass(frozen=True)
class CandidateResponse:
    text: str
    embedding: np.ndarray


class Route(str, Enum):
    LOCAL = "local"
    GLOBAL = "global"


@dataclass(frozen=True)
class GateDecision:
    route: Route
    selected_index: int | None
    low_confidence: bool
    similarity_score: float | None

    def check(self, n_candidates: int, sim_threshold: float, se_active: bool) -> None:
        if self.route is Route.LOCAL:
            if self.low_confidence:
                raise ValueError("local route with low confidence")
            if self.selected_index is None or not 0 <= self.selected_index < n_candidates:
                raise ValueError("local route without a valid candidate index")
            if se_active and (self.similarity_score is None or self.similarity_score < sim_threshold):
                raise ValueError("local route below similarity threshold")
        elif self.selected_index is not None:
            raise ValueError("global route must not select a candidate")
        if self.low_confidence and self.similarity_score is not None:
            raise ValueError("similarity score present despite low confidence")


@dataclass
class KnowledgeBundle:
    edge_id: str
    entities: list[Entity] = field(default_factory=list)
    relations: list[Relation] = field(default_factory=list)
    chunks: list[Chunk] = field(default_factory=list)
    truncated: bool = False

    def is_empty(self) -> bool:
        return not (self.entities or self.relations or self.chunks)

    def element_ids(self) -> set[str]:
        return ({e.id for e in self.entities} | {r.id for r in self.relations}
                | {c.id for c in self.chunks})

    def check(self) -> None:
        entity_ids = {e.id for e in self.entities}
        chunk_ids = {c.id for c in self.chunks}
        for rel in self.relations:
            if rel.src not in entity_ids or rel.dst not in entity_ids:
                raise ValueError(f"bundle relation {rel.id}: endpoint missing from bundle")
        if not self.truncated:
            referenced: set[str] = set()
            for item in (*self.entities, *self.relations):
                referenced |= item.source_chunk_ids
            missing = referenced - chunk_ids
            if missing:
                raise ValueError(f"bundle missing source chunks {sorted(missing)} without truncated flag")

    def to_dict(self) -> dict:
        return {
            "edge_id": self.edge_id,
            "entities": [e.to_dict() for e in self.entities],
            "relations": [r.to_dict() for r in self.relations],
            "chunks": [c.to_dict() for c in self.chunks],
            "truncated": self.truncated,
        }

    @staticmethod
    def from_dict(d: dict) -> "KnowledgeBundle":
        return KnowledgeBundle(
            edge_id=d["edge_id"],
            entities=[Entity.from_dict(e) for e in d["entities"]],
            relations=[Relation.from_dict(r) for r in d["relations"]],
            chunks=[Chunk.from_dict(c) for c in d["chunks"]],
            truncated=bool(d["truncated"]),
        )


# ---------------------------------------------------------------------------
# System configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkConfig:
    bandwidth_bits_per_s: float = 50e6
    base_rtt_s: float = 0.0


@dataclass(frozen=True)
class SimilarityWeights:
    cosine: float = 0.4
    jaccard: float = 0.2
    claims: float = 0.4


@dataclass(frozen=True)
class AblationFlags:
    disable_cd: bool = False
    disable_se: bool = False
    single_inference: bool = False
    vector_only: bool = False


@dataclass(frozen=True)
class SystemConfig:
    n_edges: int = 4
    top_m: int = 1
    top_k: int = 1
    sim_threshold: float = 0.7
    n_batch: int = 3
    size_threshold: int = 5
    resolution: float = 1.0
    chunk_size: int = 512
    chunk_overlap: int = 64
    embedding_dim: int = 64
    entity_top: int = 10
    relation_top: int = 10
    token_budget: int = 2000
    min_match_score: float = 0.0
    leiden_restarts: int = 8
    retrieval_timeout_s: float = 30.0
    rng_seed: int = 42
    link: LinkConfig = field(default_factory=LinkConfig)
    weights: SimilarityWeights = field(default_factory=SimilarityWeights)
    ablations: AblationFlags = field(default_factory=AblationFlags)

    def effective_batch(self) -> int:
        return 1 if self.ablations.single_inference else self.n_batch

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "SystemConfig":
        def sub(cls, key):
            raw = data.get(key, {})
            unknown = set(raw) - {f for f in cls.__dataclass_fields__}
            if unknown:
                raise ConfigError(f"unknown keys in {key}: {sorted(unknown)}")
            return cls(**raw)

        known = set(SystemConfig.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        flat = {k: v for k, v in data.items() if k not in ("link", "weights", "ablations")}
        try:
            return SystemConfig(
                link=sub(LinkConfig, "link"),
                weights=sub(SimilarityWeights, "weights"),
                ablations=sub(AblationFlags, "ablations"),
                **flat,
            )
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def serialize_config(cfg: SystemConfig) -> str:
    """Canonical serialization: sorted keys, two-space indent, trailing newline."""
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def parse_config(text: str) -> SystemConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be an object")
    return SystemConfig.from_dict(data)


def load_config(path: str | Path) -> SystemConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def save_config(cfg: SystemConfig, path: str | Path) -> None:
    Path(path).write_text(serialize_config(cfg), encoding="utf-8")


def validate_config(cfg: SystemConfig) -> list[str]:
    """Return every violated invariant as a field-path message. Empty list = valid."""
    bad: list[str] = []

    def require(ok: bool, message: str) -> None:
        if not ok:
            bad.append(message)

    require(cfg.n_edges > 0, "n_edges > 0")
    require(cfg.top_m > 0, "top_m > 0")
    require(cfg.top_k > 0, "top_k > 0")
    require(0.0 <= cfg.sim_threshold <= 1.0, "sim_threshold in [0,1]")
    require(cfg.n_batch > 0, "n_batch > 0")
    require(cfg.size_threshold > 0, "size_threshold > 0")
    require(cfg.resolution > 0, "resolution > 0")
    require(cfg.chunk_size > 0, "chunk_size > 0")
    require(cfg.chunk_overlap >= 0, "chunk_overlap >= 0")
    require(cfg.chunk_overlap < cfg.chunk_size, "chunk_overlap < chunk_size")
    require(cfg.embedding_dim > 0, "embedding_dim > 0")
    require(cfg.entity_top > 0, "entity_top > 0")
    require(cfg.relation_top > 0, "relation_top > 0")
    require(cfg.token_budget > 0, "token_budget > 0")
    require(0.0 <= cfg.min_match_score <= 1.0, "min_match_score in [0,1]")
    require(cfg.leiden_restarts > 0, "leiden_restarts > 0")
    require(cfg.retrieval_timeout_s > 0, "retrieval_timeout_s > 0")
    require(cfg.link.bandwidth_bits_per_s > 0, "link.bandwidth_bits_per_s > 0")
    require(cfg.link.base_rtt_s >= 0, "link.base_rtt_s >= 0")
    for name in ("cosine", "jaccard", "claims"):
        require(getattr(cfg.weights, name) >= 0, f"weights.{name} >= 0")
    return bad

"""Cluster naming: frequency profiles, prompt construction, backend clients.

A cluster is profiled by its most frequent tokens (after lowercasing,
punctuation stripping, and stopword removal) plus a seeded random sample of
member texts. The profile becomes a fixed prompt for an external
text-completion service; a deterministic offline fallback names a cluster by
joining its top three words. Duplicate names within one resolution get " 2",
" 3", ... suffixes in profile order.
"""

from __future__ import annotations

import csv
import json
import logging
import re
import time
import unicodedata
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .data import Partition
from .errors import BackendUnavailable, EmptyCluster, MalformedResponse, ParseError

logger = logging.getLogger(__name__)

MAX_NAME_LENGTH = 120

# Compact English stopword list; override with a file for other domains.
DEFAULT_STOPWORDS = frozenset(
    """
    a about above after again against all am an and any are arent as at be
    because been before being below between both but by cant cannot could
    couldnt did didnt do does doesnt doing dont down during each few for from
    further had hadnt has hasnt have havent having he her here hers herself
    him himself his how i if in into is isnt it its itself just me more most
    my myself no nor not of off on once only or other our ours ourselves out
    over own same she should shouldnt so some such than that the their theirs
    them themselves then there these they this those through to too under
    until up very was wasnt we were werent what when where which while who
    whom why will with wont would wouldnt you your yours yourself yourselves
    """.split()
)


@dataclass(frozen=True)
class ClusterProfile:
    """Top tokens (with counts) and sampled member texts for one cluster."""

    k: int
    cluster: int
    top_words: tuple[tuple[str, int], ...]
    sample_texts: tuple[str, ...]


@dataclass(frozen=True)
class NameAssignment:
    k: int
    cluster: int
    raw_name: str
    unique_name: str
    backend: str


def tokenize(text: str, stopwords: frozenset[str] = DEFAULT_STOPWORDS,
             emoji_map: dict[str, str] | None = None) -> list[str]:
    """Lowercase, strip Unicode punctuation, split on whitespace, drop stopwords."""
    if emoji_map:
        for emoji, name in emoji_map.items():
            if emoji in text:
                text = text.replace(emoji, f" {name} ")
    text = text.lower()
    text = "".join(ch for ch in text if not unicodedata.category(ch).startswith("P"))
    return [tok for tok in text.split() if tok and tok not in stopwords]


def profile_cluster(
    texts: list[str],
    membership: Partition,
    k: int,
    cluster: int,
    seed: int,
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
    emoji_map: dict[str, str] | None = None,
    top_n: int = 10,
    sample_n: int = 20,
) -> ClusterProfile:
    """Count tokens over a cluster's texts and draw a seeded sample of them.

    ``texts`` aligns index-for-index with ``membership.ids``. Top words are
    ordered by descending count, ties lexicographically. The sample seed mixes
    (seed, k, cluster) so different clusters draw independently.

    Raises:
        EmptyCluster: if the cluster has no members.
    """
    if len(texts) != membership.n_items:
        raise ValueError("texts must align with the partition's items")
    members = membership.members(cluster)
    if members.size == 0:
        raise EmptyCluster(f"cluster {cluster} at K={k} has no members")

    counts: Counter[str] = Counter()
    for i in members:
        counts.update(tokenize(texts[i], stopwords, emoji_map))
    top = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]

    member_texts = [texts[i] for i in members]
    if len(member_texts) <= sample_n:
        sample = member_texts
    else:
        rng = np.random.default_rng(np.random.SeedSequence((seed, k, cluster)))
        chosen = np.sort(rng.choice(len(member_texts), size=sample_n, replace=False))
        sample = [member_texts[i] for i in chosen]
    return ClusterProfile(
        k=k, cluster=cluster, top_words=tuple(top), sample_texts=tuple(sample)
    )


def build_prompt(profile: ClusterProfile) -> str:
    """Byte-stable naming prompt for one cluster profile."""
    lines = [
        "Create a name for the following cluster of Twitter bios. "
        "It has the following top 10 most frequent words:",
        ", ".join(word for word, _ in profile.top_words),
        "And this is a random sample of Twitter bios from the cluster:",
    ]
    lines.extend(f"{i}. {text}" for i, text in enumerate(profile.sample_texts, start=1))
    return "\n".join(lines)


def fallback_name(profile: ClusterProfile) -> str:
    return " ".join(word for word, _ in profile.top_words[:3])


class FallbackBackend:
    """Deterministic offline naming: join the top three words."""

    kind = "fallback"

    def generate(self, profile: ClusterProfile, prompt: str) -> str:
        return fallback_name(profile)


class HttpBackend:
    """Text-completion client posting {"prompt": ...} to a configurable endpoint.

    The response is JSON; ``response_path`` walks to its text field with
    dot-separated keys (integers index into lists). The auth token, when the
    environment variable named by ``token_env`` is set, is sent as a Bearer
    header.
    """

    kind = "external"

    def __init__(
        self,
        url: str,
        model: str | None = None,
        response_path: str = "name",
        token_env: str = "CLUSTERSWEEP_API_TOKEN",
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 1.0,
    ):
        self.url = url
        self.model = model
        self.response_path = response_path
        self.token_env = token_env
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def _headers(self) -> dict[str, str]:
        import os

        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _extract(self, doc) -> str:
        value = doc
        for step in self.response_path.split("."):
            try:
                value = value[int(step)] if isinstance(value, list) else value[step]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise MalformedResponse(
                    f"response has no field at path {self.response_path!r}"
                ) from exc
        if not isinstance(value, str):
            raise MalformedResponse(f"field {self.response_path!r} is not text")
        return value

    def generate(self, profile: ClusterProfile, prompt: str) -> str:
        payload = {"prompt": prompt}
        if self.model:
            payload["model"] = self.model
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = requests.post(
                    self.url, json=payload, headers=self._headers(), timeout=self.timeout
                )
                if resp.status_code >= 500:
                    raise requests.RequestException(f"server error {resp.status_code}")
                if resp.status_code != 200:
                    raise BackendUnavailable(
                        f"backend returned status {resp.status_code}"
                    )
                return self._extract(resp.json())
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * 2**attempt)
        raise BackendUnavailable(f"backend unreachable after {self.retries} attempts: {last_error}")


def sanitize_name(raw: str) -> str:
    """Trim whitespace and wrapping quotes, collapse newlines to spaces."""
    name = re.sub(r"\s*\n+\s*", " ", raw)
    return name.strip().strip("\"'").strip()


def name_clusters(
    profiles: list[ClusterProfile],
    backend,
    max_in_flight: int = 4,
    fallback_on_error: bool = False,
) -> list[NameAssignment]:
    """Name every profile, then disambiguate duplicates within the batch.

    Empty or over-long backend names fall back to the offline rule for that
    cluster (logged). ``fallback_on_error`` extends the same treatment to an
    unreachable backend instead of raising.

    Raises:
        BackendUnavailable: if the backend stays unreachable and
            ``fallback_on_error`` is false.
    """

    def one(profile: ClusterProfile) -> tuple[str, str]:
        prompt = build_prompt(profile)
        try:
            raw = sanitize_name(backend.generate(profile, prompt))
        except MalformedResponse as exc:
            logger.warning(
                "K=%d cluster %d: malformed backend response (%s); using fallback",
                profile.k, profile.cluster, exc,
            )
            return fallback_name(profile), "fallback"
        except BackendUnavailable:
            if not fallback_on_error:
                raise
            logger.warning(
                "K=%d cluster %d: backend unavailable; using fallback",
                profile.k, profile.cluster,
            )
            return fallback_name(profile), "fallback"
        if not raw or len(raw) > MAX_NAME_LENGTH:
            logger.warning(
                "K=%d cluster %d: unusable backend name (%d chars); using fallback",
                profile.k, profile.cluster, len(raw),
            )
            return fallback_name(profile), "fallback"
        return raw, backend.kind

    if getattr(backend, "kind", None) == "external" and len(profiles) > 1:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            named = list(pool.map(one, profiles))
    else:
        named = [one(p) for p in profiles]

    # Suffix duplicates sequentially in profile order.
    seen: Counter[str] = Counter()
    taken: set[str] = set()
    assignments = []
    for profile, (raw, kind) in zip(profiles, named):
        seen[raw] += 1
        unique = raw if seen[raw] == 1 else f"{raw} {seen[raw]}"
        while unique in taken:
            seen[raw] += 1
            unique = f"{raw} {seen[raw]}"
        taken.add(unique)
        assignments.append(
            NameAssignment(
                k=profile.k,
                cluster=profile.cluster,
                raw_name=raw,
                unique_name=unique,
                backend=kind,
            )
        )
    return assignments


def write_name_table(assignments: list[NameAssignment], path: str | Path) -> None:
    """CSV name table: k,cluster,raw_name,unique_name,backend."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "cluster", "raw_name", "unique_name", "backend"])
        for a in assignments:
            writer.writerow([a.k, a.cluster, a.raw_name, a.unique_name, a.backend])


def load_name_table(path: str | Path) -> dict[tuple[int, int], str]:
    """Read a name table back as a (k, cluster) -> unique_name map."""
    names: dict[tuple[int, int], str] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["k", "cluster"]:
            raise ParseError(f"{path}: not a name table (bad header)")
        for row in reader:
            if len(row) < 4:
                raise ParseError(f"{path}: short name-table row: {row!r}")
            names[(int(row[0]), int(row[1]))] = row[3]
    return names


def load_stopwords(path: str | Path) -> frozenset[str]:
    """One stopword per line; blank lines ignored."""
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        word = line.strip().lower()
        if word:
            words.add(word)
    return frozenset(words)


def load_emoji_map(path: str | Path) -> dict[str, str]:
    """JSON object mapping emoji strings to replacement names."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid emoji map JSON: {exc}") from exc
    if not isinstance(doc, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in doc.items()
    ):
        raise ParseError(f"{path}: emoji map must be a string-to-string object")
    return doc

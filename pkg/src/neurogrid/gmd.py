"""Grid Market Directory: a registry of priced services.

Providers publish ``ServiceEntry`` records; the broker queries them and takes
periodic snapshots.  The on-disk form is JSON lines, one entry per line, where
a later line for the same ``(resource_host, service_name)`` supersedes earlier
ones.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable, Iterable

CPU_SEC = "CPU_SEC"
AO = "AO"
PRICING_MODELS = (CPU_SEC, AO)
DEFAULT_SERVICE = "meg-analysis"


@dataclass(frozen=True)
class ServiceEntry:
    provider_id: str
    resource_host: str
    price: float
    pricing_model: str = CPU_SEC
    service_name: str = DEFAULT_SERVICE
    published_at: float = 0.0

    def __post_init__(self):
        if self.price < 0:
            raise ValueError(f"negative price for {self.resource_host}: {self.price}")
        if self.pricing_model not in PRICING_MODELS:
            raise ValueError(f"unknown pricing model {self.pricing_model!r}")

    @property
    def key(self) -> tuple[str, str]:
        return (self.resource_host, self.service_name)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ServiceEntry":
        return cls(**d)


@dataclass(frozen=True)
class RegistrySnapshot:
    entries: tuple[ServiceEntry, ...]
    taken_at: float

    def price_of(self, host: str, service: str = DEFAULT_SERVICE) -> ServiceEntry | None:
        for e in self.entries:
            if e.resource_host == host and e.service_name == service:
                return e
        return None


def _order(entry: ServiceEntry):
    return (entry.price, entry.resource_host, entry.service_name)


class Registry:
    """In-process directory; optionally mirrored to a JSON-lines file.

    ``clock`` supplies publish and snapshot timestamps (wall time by default,
    the simulated clock inside the simulator).
    """

    def __init__(self, path=None, clock: Callable[[], float] = time.time):
        self.path = Path(path) if path is not None else None
        self.clock = clock
        self._entries: dict[tuple[str, str], ServiceEntry] = {}
        self._last_publish = float("-inf")
        self._last_snapshot = float("-inf")
        if self.path is not None and self.path.exists():
            for entry in read_jsonl(self.path):
                self._entries[entry.key] = entry
                self._last_publish = max(self._last_publish, entry.published_at)

    def publish(self, entry: ServiceEntry) -> ServiceEntry:
        now = self.clock()
        entry = replace(entry, published_at=now)
        self._entries[entry.key] = entry
        self._last_publish = now
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(entry.to_json() + "\n")
        return entry

    def query(self, service: str | None = None, max_price: float | None = None
              ) -> list[ServiceEntry]:
        hits = [e for e in self._entries.values()
                if (service is None or e.service_name == service)
                and (max_price is None or e.price <= max_price)]
        return sorted(hits, key=_order)

    def snapshot(self) -> RegistrySnapshot:
        now = self.clock()
        # strictly increasing even if the clock has not moved
        taken = now if now > self._last_snapshot else self._last_snapshot + 1e-6
        self._last_snapshot = taken
        return RegistrySnapshot(tuple(self.query()), taken)

    def refresh(self, snap: RegistrySnapshot | None = None) -> RegistrySnapshot:
        """Fresh snapshot; the argument is the stale one being replaced."""
        return self.snapshot()

    @property
    def last_publish(self) -> float:
        return self._last_publish


def read_jsonl(path) -> list[ServiceEntry]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(ServiceEntry.from_dict(json.loads(line)))
            except (json.JSONDecodeError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad service entry ({exc})") from None
    return out


def write_jsonl(entries: Iterable[ServiceEntry], path) -> None:
    with open(path, "w") as fh:
        for e in entries:
            fh.write(e.to_json() + "\n")

"""Synthetic content catalogs for the simnet servers.

All generated bytes are derived from the harness seed plus a stable label,
so the same seed always yields byte-identical content.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field


def deterministic_bytes(seed: int, label: str, n: int) -> bytes:
    rng = random.Random(f"{seed}:{label}")
    return rng.randbytes(n)


@dataclass(frozen=True)
class FileDef:
    """A plain resource of a fixed size.

    ``truncate_at`` makes the server advertise the full size but close the
    connection after that many body bytes (fault injection).
    """

    size: int
    content_type: str = "application/octet-stream"
    truncate_at: int | None = None
    body: bytes | None = None  # explicit body overrides generated content


@dataclass(frozen=True)
class RedirectDef:
    location: str
    status: int = 302


@dataclass(frozen=True)
class PageDef:
    """An HTML page whose markup references element resources on its host.

    ``elements`` maps element path -> size in bytes.  ``repeat_refs`` lists
    paths referenced more than once in the markup (they must still be
    fetched only once).  ``html`` overrides the generated markup entirely.
    """

    elements: dict[str, int] = field(default_factory=dict)
    repeat_refs: tuple[str, ...] = ()
    pad_bytes: int = 0
    html: str | None = None

    def render(self) -> str:
        if self.html is not None:
            return self.html
        refs = list(self.elements) + [p for p in self.repeat_refs] * 2
        tags = "\n".join(f'<img src="{path}">' for path in refs)
        pad = ""
        if self.pad_bytes > 0:
            pad = "<!-- " + "x" * self.pad_bytes + " -->"
        return f"<html><head></head><body>\n{tags}\n{pad}</body></html>"


@dataclass(frozen=True)
class GroupDef:
    """An NNTP group seeded with articles of the given sizes.

    Article numbers run 1..len(sizes); advertised overview byte counts equal
    the actual body sizes.
    """

    article_sizes: tuple[int, ...]

    @classmethod
    def sized_range(cls, count: int, min_size: int, max_size: int,
                    seed: int, name: str) -> "GroupDef":
        rng = random.Random(f"{seed}:group:{name}")
        sizes = tuple(rng.randint(min_size, max_size) for _ in range(count))
        return cls(article_sizes=sizes)


def filler_group_names(count: int) -> list[str]:
    """Names for padding the group list to a configured catalog size."""
    return [f"sim.filler.group{i:05d}" for i in range(count)]

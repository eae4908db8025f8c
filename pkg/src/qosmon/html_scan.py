"""Static extraction of embedded page elements from HTML.

No script execution: only elements referenced directly in the markup are
found.  Malformed markup yields a best-effort result, never an error.
"""

from __future__ import annotations

from html.parser import HTMLParser
from urllib.parse import urljoin

# (tag, attribute) pairs that reference fetchable embedded content.
_SRC_ATTRS = {
    ("img", "src"),
    ("script", "src"),
    ("frame", "src"),
    ("iframe", "src"),
    ("embed", "src"),
    ("body", "background"),
    ("table", "background"),
    ("td", "background"),
}


class _ElementScanner(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.refs: list[str] = []

    def _add(self, value: str | None):
        if value:
            self.refs.append(value.strip())

    def handle_starttag(self, tag, attrs):
        attrs = dict(attrs)
        if (tag, "src") in _SRC_ATTRS:
            self._add(attrs.get("src"))
        if (tag, "background") in _SRC_ATTRS:
            self._add(attrs.get("background"))
        if tag == "link":
            rel = (attrs.get("rel") or "").lower().split()
            if "stylesheet" in rel:
                self._add(attrs.get("href"))
        if tag == "input" and (attrs.get("type") or "").lower() == "image":
            self._add(attrs.get("src"))

    # Treat self-closing tags identically.
    handle_startendtag = handle_starttag


def extract_elements(html: str, base_url: str) -> list[str]:
    """Return absolute URLs of embedded elements, first-occurrence order,
    each URL exactly once no matter how often it appears."""
    scanner = _ElementScanner()
    try:
        scanner.feed(html)
        scanner.close()
    except Exception:
        # Best effort: keep whatever was extracted before the parser choked.
        pass
    seen: set[str] = set()
    out: list[str] = []
    for ref in scanner.refs:
        absolute = urljoin(base_url, ref)
        if absolute not in seen:
            seen.add(absolute)
            out.append(absolute)
    return out

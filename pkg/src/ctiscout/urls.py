"""URL normalization and host helpers shared by the frontier and extractor."""
from __future__ import annotations

import posixpath
from urllib.parse import urljoin, urlsplit, urlunsplit


class UrlError(ValueError):
    """Raised for URLs that cannot be normalized into a crawlable form."""


_ALLOWED_SCHEMES = ("http", "https")
_DEFAULT_PORTS = {"http": "80", "https": "443"}


def normalize_url(url: str, base: str | None = None) -> str:
    """Normalize a URL for deduplication.

    Lowercases scheme and host, strips the fragment, resolves dot-segments,
    strips default ports, and preserves the query string. Relative URLs are
    resolved against `base` when given. Raises UrlError for non-http(s)
    schemes or empty hosts.
    """
    if not isinstance(url, str) or not url.strip():
        raise UrlError("empty URL")
    url = url.strip()
    try:
        if base:
            url = urljoin(base, url)
        parts = urlsplit(url)
        scheme = parts.scheme.lower()
        if scheme not in _ALLOWED_SCHEMES:
            raise UrlError(f"unsupported scheme {parts.scheme!r} in {url!r}")
        host = parts.hostname
        if not host:
            raise UrlError(f"missing host in {url!r}")
        port = parts.port  # raises ValueError for malformed ports
    except UrlError:
        raise
    except ValueError as exc:  # urlsplit/urljoin/port on malformed input
        raise UrlError(f"unparseable URL {url!r}: {exc}") from exc
    host = host.lower()
    netloc = host
    if port is not None and str(port) != _DEFAULT_PORTS[scheme]:
        netloc = f"{host}:{port}"

    path = parts.path or "/"
    path = _resolve_dot_segments(path)
    return urlunsplit((scheme, netloc, path, parts.query, ""))


def _resolve_dot_segments(path: str) -> str:
    # posixpath.normpath collapses "//" and drops trailing "/", both meaningful
    # in URLs, so mark and restore them around the dot-segment resolution.
    trailing_slash = path.endswith("/") and path != "/"
    normalized = posixpath.normpath(path)
    if normalized == ".":
        normalized = "/"
    if trailing_slash and not normalized.endswith("/"):
        normalized += "/"
    return normalized


def url_domain(url: str) -> str:
    """Return the netloc (lowercased host, explicit non-default port) of a URL."""
    try:
        parts = urlsplit(url)
        host = (parts.hostname or "").lower()
        port = parts.port
    except ValueError as exc:
        raise UrlError(f"unparseable URL {url!r}: {exc}") from exc
    if not host:
        raise UrlError(f"missing host in {url!r}")
    if port is not None and str(port) != _DEFAULT_PORTS.get(parts.scheme.lower(), ""):
        return f"{host}:{port}"
    return host


def url_host(url: str) -> str:
    """Return just the lowercased hostname, without any port."""
    try:
        host = urlsplit(url).hostname
    except ValueError as exc:
        raise UrlError(f"unparseable URL {url!r}: {exc}") from exc
    if not host:
        raise UrlError(f"missing host in {url!r}")
    return host.lower()


def host_matches_domain(host: str, domain: str) -> bool:
    """True if `host` equals `domain` or is a subdomain of it."""
    host = host.lower().rstrip(".")
    domain = domain.lower().rstrip(".")
    return host == domain or host.endswith("." + domain)

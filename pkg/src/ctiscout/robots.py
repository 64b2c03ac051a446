"""robots.txt parsing and rule evaluation (RFC 9309 longest-match semantics).

The stdlib parser applies first-match-wins from an older draft, so rule
evaluation is implemented here: the most specific (longest) matching pattern
decides, allow winning ties. Crawl-delay is not part of RFC 9309 but is
honored as the widely deployed de-facto extension.
"""
from __future__ import annotations

import re
import time
from dataclasses import dataclass, field


@dataclass(frozen=True)
class RobotsRule:
    allow: bool
    pattern: str

    def matches(self, path: str) -> bool:
        return _pattern_regex(self.pattern).match(path) is not None


_REGEX_CACHE: dict[str, re.Pattern] = {}


def _pattern_regex(pattern: str) -> re.Pattern:
    regex = _REGEX_CACHE.get(pattern)
    if regex is None:
        anchored = pattern.endswith("$")
        body = pattern[:-1] if anchored else pattern
        parts = [re.escape(piece) for piece in body.split("*")]
        expr = ".*".join(parts)
        if anchored:
            expr += "$"
        regex = re.compile(expr)
        _REGEX_CACHE[pattern] = regex
    return regex


@dataclass
class RobotsRecord:
    """Parsed robots rules for one domain, for this crawler's user-agent.

    crawl_delay_s is nonnegative; a declared delay wins even when lower than
    the configured default, and the default applies only when the file
    declares none.
    """

    domain: str
    rules: list[RobotsRule] = field(default_factory=list)
    crawl_delay_s: float = 5.0
    fetched_at: float = field(default_factory=time.monotonic)
    ttl_s: float = 86400.0
    deny_all: bool = False

    def allows(self, path: str) -> bool:
        if self.deny_all:
            return False
        if not path.startswith("/"):
            path = "/" + path
        best_len = -1
        best_allow = True
        for rule in self.rules:
            if not rule.matches(path):
                continue
            size = len(rule.pattern)
            if size > best_len or (size == best_len and rule.allow and not best_allow):
                best_len = size
                best_allow = rule.allow
        return best_allow

    def expired(self, now: float) -> bool:
        return now - self.fetched_at >= self.ttl_s


def parse_robots_txt(
    text: str,
    domain: str,
    user_agent: str,
    default_delay_s: float = 5.0,
    ttl_s: float = 86400.0,
) -> RobotsRecord:
    """Parse robots.txt content into the record that applies to `user_agent`.

    Groups naming the agent's product token (case-insensitive) are preferred;
    otherwise the "*" groups apply. Multiple groups for the same agent merge.
    Unparseable lines are skipped.
    """
    token = user_agent.lower()
    exact_rules: list[RobotsRule] = []
    star_rules: list[RobotsRule] = []
    exact_delay: float | None = None
    star_delay: float | None = None
    saw_exact_group = False

    current_agents: list[str] = []
    saw_rule_line = True  # a user-agent line after rules starts a new group
    for raw_line in text.splitlines():
        line = raw_line.split("#", 1)[0].strip()
        if not line or ":" not in line:
            continue
        key, _, value = line.partition(":")
        key = key.strip().lower()
        value = value.strip()

        if key == "user-agent":
            if saw_rule_line:
                current_agents = []
                saw_rule_line = False
            agent = value.lower()
            if agent == token:
                saw_exact_group = True
            current_agents.append(agent)
            continue

        saw_rule_line = True
        applies_exact = token in current_agents
        applies_star = "*" in current_agents
        if not (applies_exact or applies_star):
            continue

        if key in ("allow", "disallow"):
            if not value:
                continue  # empty Disallow means no restriction
            rule = RobotsRule(allow=(key == "allow"), pattern=value)
            if applies_exact:
                exact_rules.append(rule)
            if applies_star:
                star_rules.append(rule)
        elif key == "crawl-delay":
            try:
                delay = float(value)
            except ValueError:
                continue
            if delay < 0:
                continue
            if applies_exact:
                exact_delay = delay
            if applies_star:
                star_delay = delay

    if saw_exact_group:
        rules, delay = exact_rules, exact_delay
    else:
        rules, delay = star_rules, star_delay
    return RobotsRecord(
        domain=domain,
        rules=rules,
        crawl_delay_s=delay if delay is not None else default_delay_s,
        ttl_s=ttl_s,
    )


def allow_all_record(domain: str, default_delay_s: float, ttl_s: float = 86400.0) -> RobotsRecord:
    return RobotsRecord(domain=domain, rules=[], crawl_delay_s=default_delay_s, ttl_s=ttl_s)


def deny_all_record(domain: str, default_delay_s: float, ttl_s: float) -> RobotsRecord:
    return RobotsRecord(
        domain=domain,
        rules=[],
        crawl_delay_s=default_delay_s,
        ttl_s=ttl_s,
        deny_all=True,
    )

"""Engine tunables with flags > environment > defaults precedence.

Environment variables:

    CDTC_MASTERY_THRESHOLD   correct ratio required to master a level ("0.8")
    CDTC_MIN_ATTEMPTS        attempts required before a level can master (3)
    CDTC_MASTERY_WINDOW      recent attempts considered per mastery ratio (5)
    CDTC_REFRESHER_LADDER    review intervals, e.g. "1d,7d,30d"
    CDTC_AUDIENCE_NOUN       noun used in rendered objective statements
    CDTC_FIXED_CLOCK         epoch seconds; freezes the service clock (tests)
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Mapping, Optional

_DURATION_RE = re.compile(r"^(\d+)([dhms]?)$")
_UNIT_SECONDS = {"d": 86400, "h": 3600, "m": 60, "s": 1, "": 1}

DEFAULT_LADDER = (86400, 7 * 86400, 30 * 86400)  # 1d, 7d, 30d


def parse_duration(text: str) -> int:
    m = _DURATION_RE.match(text.strip())
    if not m:
        raise ValueError(f"bad duration {text!r}; use forms like 1d, 12h, 90m, 45s")
    return int(m.group(1)) * _UNIT_SECONDS[m.group(2)]


def parse_ladder(text: str) -> tuple[int, ...]:
    parts = [p for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("refresher ladder must have at least one interval")
    ladder = tuple(parse_duration(p) for p in parts)
    if any(interval <= 0 for interval in ladder):
        raise ValueError("refresher intervals must be positive")
    return ladder


def parse_threshold(text: str) -> Fraction:
    value = Fraction(text.strip())
    if not 0 < value <= 1:
        raise ValueError(f"mastery threshold must be in (0, 1], got {text!r}")
    return value


@dataclass(frozen=True)
class EngineConfig:
    mastery_threshold: Fraction = Fraction(4, 5)
    min_attempts: int = 3
    mastery_window: int = 5
    refresher_ladder: tuple[int, ...] = DEFAULT_LADDER
    audience_noun: str = "learner"

    def __post_init__(self):
        if isinstance(self.mastery_threshold, float):
            # exact decimal reading; the raw binary float of e.g. 0.8 sits a
            # hair above 4/5 and would reject a 4-of-5 mastery window
            object.__setattr__(
                self, "mastery_threshold", Fraction(str(self.mastery_threshold))
            )
        if not 0 < self.mastery_threshold <= 1:
            raise ValueError("mastery_threshold must be in (0, 1]")
        if self.min_attempts < 1 or self.mastery_window < 1:
            raise ValueError("min_attempts and mastery_window must be >= 1")
        if not self.refresher_ladder or any(i <= 0 for i in self.refresher_ladder):
            raise ValueError("refresher ladder must be non-empty and positive")


def config_from_env(env: Optional[Mapping[str, str]] = None) -> EngineConfig:
    env = os.environ if env is None else env
    config = EngineConfig()
    if "CDTC_MASTERY_THRESHOLD" in env:
        config = replace(config, mastery_threshold=parse_threshold(env["CDTC_MASTERY_THRESHOLD"]))
    if "CDTC_MIN_ATTEMPTS" in env:
        config = replace(config, min_attempts=int(env["CDTC_MIN_ATTEMPTS"]))
    if "CDTC_MASTERY_WINDOW" in env:
        config = replace(config, mastery_window=int(env["CDTC_MASTERY_WINDOW"]))
    if "CDTC_REFRESHER_LADDER" in env:
        config = replace(config, refresher_ladder=parse_ladder(env["CDTC_REFRESHER_LADDER"]))
    if "CDTC_AUDIENCE_NOUN" in env:
        config = replace(config, audience_noun=env["CDTC_AUDIENCE_NOUN"])
    return config

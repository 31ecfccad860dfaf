"""Access to the bundled fixture corpus under `fixtures/`.

The corpus encodes real training-module content (newborn care, hand
washing, anemia, kangaroo mother care) classified by content type, with
hand-counted expectations recorded in `fixtures/manifest.json`. Fixture
strings are verbatim or lightly normalized source content; the split of
mixed-type source bullets into single-type items is noted in file comments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class FixtureSet:
    directory: Path
    manifest: dict

    @property
    def files(self) -> list[Path]:
        return [self.directory / entry["file"] for entry in self.manifest["fixtures"]]

    def entry(self, filename: str) -> dict:
        for entry in self.manifest["fixtures"]:
            if entry["file"] == filename:
                return entry
        raise KeyError(filename)


def fixtures_dir() -> Path:
    """Locate the fixtures directory relative to the repository root."""
    here = Path(__file__).resolve()
    for parent in here.parents:
        candidate = parent / "fixtures" / "manifest.json"
        if candidate.exists():
            return candidate.parent
    raise FileNotFoundError("fixtures/manifest.json not found above " + str(here))


def build_fixture_set() -> FixtureSet:
    directory = fixtures_dir()
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    return FixtureSet(directory=directory, manifest=manifest)

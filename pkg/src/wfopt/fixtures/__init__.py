"""Bundled example workflows with synthetic profile tables.

Three workflow shapes ship with the package:

* ``math`` -- four optional solving branches (one a two-stage
  programmer/refiner pipeline) merged disjunctively, with an aggregation
  stage that activates only when at least two branches are on.
* ``hotpotqa`` -- up to three optional answer generators, optional
  aggregation under the same two-branch rule, and an optional formatter.
* ``livecodebench`` -- up to three optional code writers feeding a
  mandatory aggregator, then a bounded repair loop whose retry depth is a
  structural choice.

Profile tables are synthetic but frozen: regenerate with
``python scripts/generate_fixtures.py`` from the repository root.
``*.restriction.json`` files clamp the spaces to brute-force scale
(252 and 80 configurations), and ``*.scenario.json`` files replay the
profile values as simulation ground truth.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

FIXTURE_NAMES = ("math", "hotpotqa", "livecodebench")


def fixture_path(filename: str) -> Path:
    """Absolute path of a bundled fixture file, e.g. ``math.workflow.json``."""
    p = resources.files(__package__).joinpath(filename)
    if not p.is_file():
        raise FileNotFoundError(f"no bundled fixture {filename!r}")
    return Path(str(p))


def fixture_text(filename: str) -> str:
    return fixture_path(filename).read_text(encoding="utf-8")

"""Published JSON schemas for scenario files, findings, estimates and reports."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema
from referencing import Registry, Resource

NAMES = ("scenario", "finding", "estimate", "report")


@lru_cache(maxsize=None)
def load(name: str) -> dict:
    return json.loads(resources.files("dtadag").joinpath("schemas", f"{name}.schema.json").read_text())


@lru_cache(maxsize=None)
def _registry() -> Registry:
    return Registry().with_resources(
        (f"{n}.schema.json", Resource.from_contents(load(n))) for n in NAMES
    )


def validate(doc, name: str) -> None:
    """Raise ``jsonschema.ValidationError`` if ``doc`` does not match schema ``name``."""
    schema = load(name)
    cls = jsonschema.validators.validator_for(schema)
    cls(schema, registry=_registry()).validate(doc)

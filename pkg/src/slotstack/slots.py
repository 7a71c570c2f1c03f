"""Slot registry for PER / ORG / GPE queries.

Arity follows the TAC KBP slot-filling guidelines: a handful of slots admit a
single filler, everything else is list-valued.  Each slot also carries a
*value class* used by post-processing to pick a deduplication strategy.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from pathlib import Path


class EntityType(str, enum.Enum):
    PER = "PER"
    ORG = "ORG"
    GPE = "GPE"

    @classmethod
    def parse(cls, text: str) -> "EntityType":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ValueError(f"unknown entity type {text!r}") from None


class Arity(str, enum.Enum):
    SINGLE = "SINGLE"
    LIST = "LIST"


@dataclass(frozen=True)
class SlotSpec:
    name: str
    entity_type: EntityType
    arity: Arity


_PER_SINGLE = {
    "per:date_of_birth", "per:age", "per:country_of_birth",
    "per:stateorprovince_of_birth", "per:city_of_birth", "per:date_of_death",
    "per:country_of_death", "per:stateorprovince_of_death", "per:city_of_death",
    "per:cause_of_death", "per:religion",
}
_PER_LIST = {
    "per:alternate_names", "per:parents", "per:spouse", "per:origin",
    "per:other_family", "per:title", "per:children", "per:siblings",
    "per:charges", "per:countries_of_residence",
    "per:statesorprovinces_of_residence", "per:cities_of_residence",
    "per:schools_attended", "per:employee_or_member_of",
}
_ORG_SINGLE = {
    "org:country_of_headquarters", "org:stateorprovince_of_headquarters",
    "org:city_of_headquarters", "org:number_of_employees_members",
    "org:date_founded", "org:date_dissolved", "org:website",
}
_ORG_LIST = {
    "org:alternate_names", "org:shareholders", "org:top_members_employees",
    "org:political_religious_affiliation", "org:founded_by", "org:members",
    "org:member_of", "org:subsidiaries", "org:parents",
}
# Cold-start inverse slots with a GPE subject.
_GPE_LIST = {
    "gpe:births_in_city", "gpe:births_in_stateorprovince",
    "gpe:births_in_country", "gpe:residents_of_city",
    "gpe:residents_of_stateorprovince", "gpe:residents_of_country",
    "gpe:deaths_in_city", "gpe:deaths_in_stateorprovince",
    "gpe:deaths_in_country", "gpe:employees_or_members",
    "gpe:headquarters_in_city", "gpe:headquarters_in_stateorprovince",
    "gpe:headquarters_in_country", "gpe:member_of",
}


def _build_registry() -> dict[str, SlotSpec]:
    reg = {}
    for names, etype, arity in (
        (_PER_SINGLE, EntityType.PER, Arity.SINGLE),
        (_PER_LIST, EntityType.PER, Arity.LIST),
        (_ORG_SINGLE, EntityType.ORG, Arity.SINGLE),
        (_ORG_LIST, EntityType.ORG, Arity.LIST),
        (_GPE_LIST, EntityType.GPE, Arity.LIST),
    ):
        for name in names:
            reg[name] = SlotSpec(name, etype, arity)
    return dict(sorted(reg.items()))


SLOT_REGISTRY: dict[str, SlotSpec] = _build_registry()


def is_registered(slot: str) -> bool:
    return slot in SLOT_REGISTRY


def arity(slot: str) -> Arity:
    """Arity of ``slot``; unregistered slots are treated as list-valued."""
    spec = SLOT_REGISTRY.get(slot)
    return spec.arity if spec is not None else Arity.LIST


def is_single(slot: str) -> bool:
    return arity(slot) is Arity.SINGLE


def slots_for(entity_type: EntityType) -> list[str]:
    return [s.name for s in SLOT_REGISTRY.values() if s.entity_type is entity_type]


# --- value classes ---------------------------------------------------------

VALUE_CLASSES = ("entity", "date", "numeric", "string")

DEFAULT_SLOT_CLASSES: dict[str, str] = {name: "entity" for name in SLOT_REGISTRY}
DEFAULT_SLOT_CLASSES.update({
    "per:date_of_birth": "date",
    "per:date_of_death": "date",
    "org:date_founded": "date",
    "org:date_dissolved": "date",
    "per:age": "numeric",
    "org:number_of_employees_members": "numeric",
    "per:title": "string",
    "per:charges": "string",
    "per:cause_of_death": "string",
    "org:website": "string",
})


def load_slot_classes(path) -> dict[str, str]:
    """Read a ``slot<TAB>class`` table, layered over the defaults."""
    table = dict(DEFAULT_SLOT_CLASSES)
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), 1):
            if not row or row[0].startswith("#"):
                continue
            if len(row) != 2 or row[1] not in VALUE_CLASSES:
                raise ValueError(f"{path}:{lineno}: expected 'slot<TAB>class' with class in {VALUE_CLASSES}")
            table[row[0]] = row[1]
    return table


def write_slot_classes(path, table: dict[str, str]) -> None:
    Path(path).write_text("".join(f"{k}\t{v}\n" for k, v in sorted(table.items())), encoding="utf-8")

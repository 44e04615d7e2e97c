import json
import os
from typing import Type, TypeVar

from pydantic import BaseModel, ConfigDict

from softpinn.errors import UnsupportedFileVersionError

SCHEMA_MAJOR = 1
SCHEMA_VERSION = f"{SCHEMA_MAJOR}.0"


class DocumentSection(BaseModel):
    """A nested object of a JSON document; unknown keys are rejected"""

    model_config = ConfigDict(extra="forbid")


class VersionedDocument(DocumentSection):
    """Base of every JSON document written by softpinn"""

    version: str = SCHEMA_VERSION
    """Schema tag `major.minor`; readers accept any minor of their major"""


DocumentT = TypeVar("DocumentT", bound=VersionedDocument)


def check_version(version: object, /, *, what: str) -> None:
    major = str(version).split(".")[0]
    if major != str(SCHEMA_MAJOR):
        raise UnsupportedFileVersionError(
            f"{what} has schema version {version!r}, only major version {SCHEMA_MAJOR} is supported"
        )


def parse_document(raw: str, cls: Type[DocumentT], /, *, what: str) -> DocumentT:
    data = json.loads(raw)
    if not isinstance(data, dict):
        raise ValueError(f"{what} must be a JSON object")
    check_version(data.get("version"), what=what)
    return cls.model_validate(data)


def load_document(path: str, cls: Type[DocumentT]) -> DocumentT:
    with open(path, "r") as f:
        raw = f.read()
    return parse_document(raw, cls, what=path)


def dump_document(doc: VersionedDocument, path: str) -> None:
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w") as f:
        f.write(doc.model_dump_json(indent=2) + "\n")

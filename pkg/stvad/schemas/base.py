from typing import Any, List, Type, TypeVar

from pydantic import BaseModel

SectionT = TypeVar("SectionT", bound=BaseModel)


def split_csv(value: Any) -> Any:
    """Accept ``"32,64"`` from flat config files where a list is expected."""
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


class ConfigSection(BaseModel):
    """A group of related settings that RunConfig flattens into one key space."""

    class Config:
        extra = "forbid"
        validate_assignment = True

    @classmethod
    def section_fields(cls) -> List[str]:
        return list(cls.__fields__)

    @classmethod
    def from_flat(cls: Type[SectionT], flat: BaseModel) -> SectionT:
        return cls(**flat.dict(include=set(cls.__fields__)))

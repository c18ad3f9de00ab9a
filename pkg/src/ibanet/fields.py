import typing

import pydantic

LossKind = typing.Literal["cb_focal", "cross_entropy"]
FusionMode = typing.Literal["addition", "averaging", "multiplication", "concatenation", "soft_weighted"]
SplitScheme = typing.Literal["leave_one_subject_out", "stratified_kfold"]
AblationKind = typing.Literal["modules", "fusion", "rates", "k", "imbalance", "angles"]
Command = typing.Literal["synth", "train", "cv", "grid", "ablate", "etf-check", "angles"]

FUSION_MODES: tuple[FusionMode, ...] = typing.get_args(FusionMode)


def split_commas(value: object) -> object:
    """Accept `2,4,8` wherever a tuple is expected."""
    if isinstance(value, str):
        return tuple(v.strip() for v in value.split(",") if v.strip())
    return value


IntTuple = typing.Annotated[tuple[int, ...], pydantic.BeforeValidator(split_commas)]
FloatTuple = typing.Annotated[tuple[float, ...], pydantic.BeforeValidator(split_commas)]
FusionModes = typing.Annotated[tuple[FusionMode, ...], pydantic.BeforeValidator(split_commas)]

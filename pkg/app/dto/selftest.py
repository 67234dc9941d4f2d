from pydantic import BaseModel, ConfigDict, Field

SELFTEST_HEADER = ("check", "n", "value", "tolerance", "passed")


class SelftestRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    check: str
    n: int
    value: float = Field(..., description="Worst residual, relative error or residual / error-estimate ratio")
    tolerance: float
    passed: bool


class SelftestReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int
    n_max: int
    rows: list[SelftestRow]
    passed: bool

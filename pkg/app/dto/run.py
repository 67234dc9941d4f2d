from enum import StrEnum
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.dto.inequality import CknParams, GeneralCknParams, TheoremId
from app.dto.quadrature import QuadratureBudget
from app.dto.search import ParamGrid, SearchProblem


class Command(StrEnum):
    VERIFY = "verify"
    SWEEP = "sweep"
    SEARCH = "search"
    SELFTEST = "selftest"


class OutputFormat(StrEnum):
    JSON = "json"
    CSV = "csv"


class RunConfig(BaseModel):
    """One batch run, merged from an optional JSON/TOML file and command-line flags."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    command: Command
    theorem_id: TheoremId | None = None
    params: CknParams | None = None
    general_params: GeneralCknParams | None = None
    n: int | None = Field(default=None, ge=1)
    field: Path | None = Field(default=None, description="FieldSpec JSON file")
    grid: ParamGrid | None = Field(default=None, description="Sweep grid")
    problem: SearchProblem | None = None
    grid_scan: int | None = Field(default=None, ge=2, description="Points per axis of an extra grid scan")
    budget: QuadratureBudget | None = Field(default=None, description="Node counts; None keeps each command's default")
    out: Path | None = None
    format: OutputFormat | None = None
    seed: int = Field(default=42, ge=0, lt=2**64)
    threads: int | None = Field(default=None, ge=1)
    n_max: int = Field(default=3, ge=2, le=5)

    @model_validator(mode="after")
    def validate_command(self) -> "RunConfig":
        if self.field is not None and not self.field.exists():
            raise ValueError(f"field file not found: {self.field}")

        match self.command:
            case Command.VERIFY | Command.SWEEP:
                if self.theorem_id is None:
                    raise ValueError(f"{self.command} needs a theorem")
                if self.field is None:
                    raise ValueError(f"{self.command} needs a field file")
                if self.command == Command.SWEEP and self.grid is None:
                    raise ValueError("sweep needs a parameter grid")
            case Command.SEARCH:
                if self.problem is None:
                    raise ValueError("search needs a problem")
        return self

    @property
    def output_format(self) -> OutputFormat:
        if self.format is not None:
            return self.format
        return OutputFormat.CSV if self.command == Command.SWEEP else OutputFormat.JSON

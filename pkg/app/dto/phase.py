from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

type Setting = Literal["euclidean", "sphere"]


class PhaseData(BaseModel):
    model_config = ConfigDict(frozen=True)

    magnitude: float | None = Field(..., ge=0, description="|Phi'_f(x)|, absent where |f(x)| is below the floor")
    amp_times_phase: float = Field(..., ge=0, description="|f(x)| |Phi'_f(x)|")
    amplitude: float = Field(..., ge=0, description="|f(x)|")
    phase_vector: tuple[float, ...] | None = Field(default=None, description="Phi'_f(x), complex fields only")

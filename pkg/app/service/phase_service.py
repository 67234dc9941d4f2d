from dataclasses import dataclass
from itertools import combinations

import numpy as np

from app.config import config
from app.dto.field import FieldSpec, Point
from app.dto.phase import PhaseData, Setting
from app.errors import FieldEvaluationError, PhaseError
from app.service.field_service import FieldSample, FieldService
from app.service.sphere_service import SphereService


@dataclass(frozen=True)
class SplitTerms:
    """Pointwise pieces of |grad f|^2 = |grad|f||^2 + (|f| |Phi'_f|)^2."""

    grad_sq: np.ndarray  # |grad f|^2
    amp_grad_sq: np.ndarray  # |grad |f||^2
    amp_times_phase: np.ndarray  # |f| |Phi'_f|
    amplitude: np.ndarray  # |f|
    half_grad_amp_sq: np.ndarray  # (N, d) sum_j f_j grad f_j = grad(|f|^2) / 2
    resolved: np.ndarray  # |f| above the amplitude floor


def split_terms(sample: FieldSample, floor: float, reference: float | None = None) -> SplitTerms:
    """Amplitude-split form; below the floor |grad|f||^2 takes its limit value, the top eigenvalue of J^T J.

    The floor is relative to ``reference``, by default the largest amplitude in the batch.
    """
    amp_sq = sample.amplitude_sq
    amplitude = np.sqrt(amp_sq)
    if reference is None:
        reference = float(np.max(amplitude)) if amplitude.size else 0.0
    resolved = amplitude > floor * reference

    grad_sq = sample.grad_sq
    half_grad = np.einsum("nm,nmd->nd", sample.values, sample.grads)
    amp_grad_sq = np.zeros_like(amp_sq)
    np.divide(np.sum(half_grad * half_grad, axis=1), amp_sq, out=amp_grad_sq, where=resolved)

    if sample.values.shape[1] == 1:
        # a real scalar field has no phase: |grad|f|| = |grad f| wherever it is defined
        amp_grad_sq = grad_sq.copy()
    elif not resolved.all():
        jacobians = sample.grads[~resolved]
        amp_grad_sq[~resolved] = np.linalg.norm(jacobians, ord=2, axis=(1, 2)) ** 2

    amp_times_phase = np.sqrt(np.clip(grad_sq - amp_grad_sq, 0.0, None))
    return SplitTerms(
        grad_sq=grad_sq,
        amp_grad_sq=amp_grad_sq,
        amp_times_phase=amp_times_phase,
        amplitude=amplitude,
        half_grad_amp_sq=half_grad,
        resolved=resolved,
    )


def direct_magnitude_sq(sample: FieldSample) -> np.ndarray:
    """|Phi'_f|^2 as the pair sum over j < l of |f_l grad f_j - f_j grad f_l|^2 / |f|^4."""
    values, grads = sample.values, sample.grads
    total = np.zeros(len(values))
    for j, l in combinations(range(values.shape[1]), 2):
        cross = values[:, l, None] * grads[:, j, :] - values[:, j, None] * grads[:, l, :]
        total += np.sum(cross * cross, axis=1)
    amp_sq = sample.amplitude_sq
    return total / (amp_sq * amp_sq)


def phase_current(sample: FieldSample) -> np.ndarray:
    """u grad v - v grad u for a complex field, i.e. |f|^2 Phi'_f."""
    if sample.codomain != "complex":
        raise FieldEvaluationError("the phase vector exists only for complex fields")
    u, v = sample.values[:, 0, None], sample.values[:, 1, None]
    return u * sample.grads[:, 1, :] - v * sample.grads[:, 0, :]


class PhaseService:
    """Generalized phase derivative in direct and amplitude-split form."""

    field_service: FieldService
    sphere_service: SphereService
    amplitude_floor: float

    def __init__(
        self,
        field_service: FieldService | None = None,
        sphere_service: SphereService | None = None,
        amplitude_floor: float | None = None,
    ) -> None:
        self.field_service = field_service or FieldService()
        self.sphere_service = sphere_service or SphereService(field_service=self.field_service)
        self.amplitude_floor = amplitude_floor if amplitude_floor is not None else config.amplitude_floor

    def _sample(self, f: FieldSpec, x: Point, setting: Setting) -> FieldSample:
        if setting == "sphere":
            return self.sphere_service.sample(f, np.array([x.coords]))
        return self.field_service.sample(f, np.array([x.coords]))

    def phase_derivative_direct(
        self, f: FieldSpec, x: Point, setting: Setting = "euclidean", reference_amplitude: float = 1.0
    ) -> PhaseData:
        """Direct cross-term form; refused where |f(x)| <= amplitude_floor * reference_amplitude."""
        sample = self._sample(f, x, setting)
        amplitude = float(np.sqrt(sample.amplitude_sq[0]))
        if amplitude <= self.amplitude_floor * reference_amplitude:
            raise PhaseError(f"|f(x)| = {amplitude:.3e} is below the amplitude floor; use amp_phase_split instead")

        magnitude = float(np.sqrt(direct_magnitude_sq(sample)[0]))
        phase_vector = None
        if sample.codomain == "complex":
            phase_vector = tuple((phase_current(sample)[0] / (amplitude * amplitude)).tolist())

        return PhaseData(
            magnitude=magnitude,
            amp_times_phase=magnitude * amplitude,
            amplitude=amplitude,
            phase_vector=phase_vector,
        )

    def amp_phase_split(self, f: FieldSpec, x: Point, setting: Setting = "euclidean") -> PhaseData:
        """|f| |Phi'_f| = sqrt(max(0, |grad f|^2 - |grad |f||^2)); defined at every point."""
        sample = self._sample(f, x, setting)
        amplitude = float(np.sqrt(sample.amplitude_sq[0]))
        terms = split_terms(sample, self.amplitude_floor, reference=1.0)
        amp_times_phase = float(terms.amp_times_phase[0])

        resolved = bool(terms.resolved[0])
        phase_vector = None
        if resolved and sample.codomain == "complex":
            phase_vector = tuple((phase_current(sample)[0] / (amplitude * amplitude)).tolist())

        return PhaseData(
            magnitude=amp_times_phase / amplitude if resolved else None,
            amp_times_phase=amp_times_phase,
            amplitude=amplitude,
            phase_vector=phase_vector,
        )

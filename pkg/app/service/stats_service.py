from dataclasses import dataclass
import math

from loguru import logger
import numpy as np

from app.config import config
from app.dto.field import FieldSpec
from app.dto.quadrature import QuadratureBudget, QuadratureGrid
from app.dto.sphere import DecompositionResiduals, IdentityResidual, SphereStats
from app.errors import NormalizationError, SphereDomainError
from app.service.field_service import FieldSample
from app.service.phase_service import phase_current, split_terms
from app.service.quadrature_service import QuadratureService
from app.service.sphere_service import SphereService

# Second-pass integrands, all quadratic in f
SECOND_PASS = (
    "var_x",
    "grad_energy",
    "var_freq",
    "var_freq_star",
    "cov",
    "cov_star",
    "amp_grad_energy",
    "phase_energy",
)


@dataclass(frozen=True)
class LevelStats:
    """Unit-energy statistics on one grid level."""

    energy: float  # raw energy before normalization
    tau: np.ndarray
    a_real: np.ndarray
    a_star: np.ndarray
    scalars: dict[str, float]
    rounding: dict[str, float]


def _pair(sample: FieldSample) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(u, v, grad u, grad v); real fields have v = 0."""
    u, gu = sample.values[:, 0, None], sample.grads[:, 0, :]
    if sample.codomain == "complex":
        return u, sample.values[:, 1, None], gu, sample.grads[:, 1, :]
    return u, np.zeros_like(u), gu, np.zeros_like(gu)


def _row_sq(values: np.ndarray) -> np.ndarray:
    return np.sum(values * values, axis=1)


class StatsService:
    """Spherical means, variances and covariances of a field normalized to unit energy."""

    quadrature_service: QuadratureService
    sphere_service: SphereService
    amplitude_floor: float

    def __init__(
        self,
        sphere_service: SphereService | None = None,
        quadrature_service: QuadratureService | None = None,
        amplitude_floor: float | None = None,
    ) -> None:
        self.quadrature_service = quadrature_service or QuadratureService()
        self.sphere_service = sphere_service or SphereService(quadrature_service=self.quadrature_service)
        self.amplitude_floor = amplitude_floor if amplitude_floor is not None else config.amplitude_floor

    def compute_stats(self, f: FieldSpec, n: int, budget: QuadratureBudget | None = None) -> SphereStats:
        levels = self.levels(f, n, budget)
        fine = levels[-1]
        errors = self.level_errors(levels)
        self._flag(errors, budget)

        vector = f.codomain == "vector"
        return SphereStats(
            n=n,
            codomain=f.codomain,
            tau=fine.tau.tolist(),
            var_x=fine.scalars["var_x"],
            a_real=fine.a_real.tolist(),
            a_star=None if vector else fine.a_star.tolist(),
            var_freq=fine.scalars["var_freq"],
            var_freq_star=None if vector else fine.scalars["var_freq_star"],
            cov=fine.scalars["cov"],
            cov_star=None if vector else fine.scalars["cov_star"],
            energy=1.0,
            grad_energy=fine.scalars["grad_energy"],
            renormalization=1.0 / math.sqrt(fine.energy),
            errors=errors,
        )

    def variance_decomposition_residuals(
        self, f: FieldSpec, n: int, budget: QuadratureBudget | None = None
    ) -> DecompositionResiduals:
        """Residuals of V = amplitude part + centered phase part, and of V* = Int|grad|f||^2 + centered phase part.

        The phase part Int|Phi' - a*|^2 |f|^2 is expanded as Int(|f| |Phi'|)^2 - |a*|^2, so no amplitude division is
        needed. For real and vector fields a* = 0 and the phase part is the plain Int|Phi'|^2 |f|^2.
        """
        levels = self.levels(f, n, budget)
        fine = levels[-1]
        errors = self.level_errors(levels)

        a_real_sq = float(fine.a_real @ fine.a_real)
        a_star_sq = float(fine.a_star @ fine.a_star)
        amplitude_part = fine.scalars["amp_grad_energy"] - a_real_sq
        phase_part = fine.scalars["phase_energy"] - a_star_sq

        mean_error = 2.0 * math.sqrt(a_real_sq) * errors["a_real"] + 2.0 * math.sqrt(a_star_sq) * errors["a_star"]
        parts_error = errors["amp_grad_energy"] + errors["phase_energy"] + mean_error

        res1 = abs(fine.scalars["var_freq"] - (amplitude_part + phase_part))
        res1_error = errors["var_freq"] + parts_error
        if f.codomain == "vector":
            return DecompositionResiduals(res1=res1, res1_error=res1_error)

        res2 = abs(fine.scalars["var_freq_star"] - (fine.scalars["amp_grad_energy"] + phase_part))
        res2_error = errors["var_freq_star"] + parts_error
        return DecompositionResiduals(res1=res1, res1_error=res1_error, res2=res2, res2_error=res2_error)

    def frequency_mean_residual(self, f: FieldSpec, n: int, budget: QuadratureBudget | None = None) -> IdentityResidual:
        """|Re a(f) - (n/2) tau_f|, zero by integration by parts."""
        levels = self.levels(f, n, budget)
        fine = levels[-1]
        errors = self.level_errors(levels)
        expected = 0.5 * n * fine.tau
        return IdentityResidual(
            residual=float(np.linalg.norm(fine.a_real - expected)),
            error_estimate=errors["a_real"] + 0.5 * n * errors["tau"],
            lhs=float(np.linalg.norm(fine.a_real)),
            rhs=float(np.linalg.norm(expected)),
        )

    def levels(self, f: FieldSpec, n: int, budget: QuadratureBudget | None = None) -> list[LevelStats]:
        """Both passes on every refinement level, coarse to fine."""
        domain = f.domain
        if domain is None or domain.kind != "sphere":
            raise SphereDomainError("sphere statistics need a field on a sphere domain")
        if domain.n != n:
            raise SphereDomainError(f"field lives on S^{domain.n}, not S^{n}")

        budget = budget or config.default_budget()
        return [self._level(f, grid) for grid in self.quadrature_service.sphere_grids(n, budget)]

    @staticmethod
    def level_errors(levels: list[LevelStats]) -> dict[str, float]:
        """Change over the last doubling, never below the rounding bound."""
        fine = levels[-1]
        coarse = levels[-2] if len(levels) > 1 else fine

        errors = {
            "tau": max(float(np.linalg.norm(fine.tau - coarse.tau)), fine.rounding["tau"]),
            "a_real": max(float(np.linalg.norm(fine.a_real - coarse.a_real)), fine.rounding["a_real"]),
            "a_star": max(float(np.linalg.norm(fine.a_star - coarse.a_star)), fine.rounding["a_star"]),
        }
        for name in SECOND_PASS:
            errors[name] = max(abs(fine.scalars[name] - coarse.scalars[name]), fine.rounding[name])
        return errors

    def _level(self, f: FieldSpec, grid: QuadratureGrid) -> LevelStats:
        d = grid.dim

        def first_pass(points: np.ndarray) -> np.ndarray:
            sample = self.sphere_service.sample(f, points)
            amp_sq = sample.amplitude_sq
            half_grad = np.einsum("nm,nmd->nd", sample.values, sample.grads)
            current = phase_current(sample) if sample.codomain == "complex" else np.zeros_like(points)
            return np.column_stack([amp_sq, points * amp_sq[:, None], half_grad, current])

        first = self.quadrature_service.sum_grid(grid, first_pass)
        energy = float(first.values[0])
        if not math.isfinite(energy) or energy <= 0.0:
            raise NormalizationError(f"field energy {energy!r} cannot be normalized to 1")

        tau = first.values[1 : 1 + d] / energy
        a_real = first.values[1 + d : 1 + 2 * d] / energy
        a_star = first.values[1 + 2 * d :] / energy

        def second_pass(points: np.ndarray) -> np.ndarray:
            sample = self.sphere_service.sample(f, points)
            terms = split_terms(sample, self.amplitude_floor)
            amp_sq = sample.amplitude_sq
            offset = points - tau
            distance = np.sqrt(_row_sq(offset))

            if sample.codomain == "vector":
                centered = sample.grads - a_real[None, None, :] * sample.values[:, :, None]
                var_freq = np.sum(centered * centered, axis=(1, 2))
                var_freq_star = cov_star = np.zeros(len(points))
            else:
                u, v, gu, gv = _pair(sample)
                var_freq = _row_sq(gu - a_real * u + a_star * v) + _row_sq(gv - a_real * v - a_star * u)
                var_freq_star = _row_sq(gv - a_star * u) + _row_sq(gu + a_star * v)
                current = u * gv - v * gu
                cov_star = distance * np.sqrt(_row_sq(current - a_star * amp_sq[:, None]))

            return np.column_stack(
                [
                    _row_sq(offset) * amp_sq,
                    terms.grad_sq,
                    var_freq,
                    var_freq_star,
                    distance * terms.amplitude * terms.amp_times_phase,
                    cov_star,
                    terms.amp_grad_sq,
                    terms.amp_times_phase**2,
                ]
            )

        second = self.quadrature_service.sum_grid(grid, second_pass)
        logger.debug(f"Sphere statistics on {grid.size} nodes (energy {energy:.6g})")

        rounding = {name: float(value) / energy for name, value in zip(SECOND_PASS, second.rounding, strict=True)}
        first_rounding = first.rounding / energy
        rounding["tau"] = float(np.linalg.norm(first_rounding[1 : 1 + d]))
        rounding["a_real"] = float(np.linalg.norm(first_rounding[1 + d : 1 + 2 * d]))
        rounding["a_star"] = float(np.linalg.norm(first_rounding[1 + 2 * d :]))

        return LevelStats(
            energy=energy,
            tau=tau,
            a_real=a_real,
            a_star=a_star,
            scalars={name: float(value) / energy for name, value in zip(SECOND_PASS, second.values, strict=True)},
            rounding=rounding,
        )

    @staticmethod
    def _flag(errors: dict[str, float], budget: QuadratureBudget | None) -> None:
        if budget is None or budget.tolerance is None:
            return
        for name, error in errors.items():
            if error > budget.tolerance:
                logger.warning(f"Error estimate for {name} ({error:.3e}) exceeds tolerance {budget.tolerance:.3e}")

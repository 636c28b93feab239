"""
Scalar objective functions over allocations for the deterministic,
modified E, E, V and P models under trace, determinant and extreme-eigenvalue
value functions.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import linalg

from stratalloc.core.exceptions import UnsupportedModelError, ValidationError
from stratalloc.processing import determinant_model, moment_formulas

logger = logging.getLogger(__name__)


class ValueFunction(str, Enum):
    TRACE = "trace"
    DETERMINANT = "determinant"
    LAMBDA_MAX = "lambda_max"
    LAMBDA_MIN = "lambda_min"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"tr": "trace", "det": "determinant", "lmax": "lambda_max", "lmin": "lambda_min"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValidationError(f"unknown value function '{value}'.") from None


class Model(str, Enum):
    DETERMINISTIC = "deterministic"
    MODIFIED_E = "modified_E"
    E = "E"
    V = "V"
    P = "P"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        lookup = {"deterministic": cls.DETERMINISTIC, "modified_e": cls.MODIFIED_E, "e": cls.E, "v": cls.V, "p": cls.P}
        if key not in lookup:
            raise ValidationError(f"unknown model '{value}'.")
        return lookup[key]

    @property
    def is_stochastic(self):
        return self is not Model.DETERMINISTIC


@dataclass(frozen=True)
class ModelSpec:
    """
    Choice of stochastic model and value function.

    :param model: One of :class:`Model` (strings such as ``"modified-e"`` are accepted).
    :param value_fn: One of :class:`ValueFunction`.
    :param k1: Weight of the expectation (modified E-model); forced to 1 for E and 0 for V.
    :param k2: Weight of the standard deviation; forced to 0 for E and 1 for V.
    :param tau: Aspiration level of the P-model.
    :param characteristics: Optional subset (names or 1-based positions) the value function is restricted to.
    :param det_basis: ``"vech"`` (default) or the literal ``"vec"`` determinant of the N matrix for stochastic determinant models.
    """

    model: Model
    value_fn: ValueFunction = ValueFunction.TRACE
    k1: Optional[float] = None
    k2: Optional[float] = None
    tau: Optional[float] = None
    characteristics: Optional[Tuple] = None
    det_basis: str = "vech"

    def __post_init__(self):
        model = Model.parse(self.model)
        value_fn = ValueFunction.parse(self.value_fn)
        object.__setattr__(self, "model", model)
        object.__setattr__(self, "value_fn", value_fn)
        k1, k2 = self.k1, self.k2
        if model is Model.E:
            if (k1, k2) not in ((None, None), (1, 0), (1.0, 0.0)):
                raise ValidationError(f"the E-model fixes (k1, k2) = (1, 0), got ({k1}, {k2}).")
            k1, k2 = 1.0, 0.0
        elif model is Model.V:
            if (k1, k2) not in ((None, None), (0, 1), (0.0, 1.0)):
                raise ValidationError(f"the V-model fixes (k1, k2) = (0, 1), got ({k1}, {k2}).")
            k1, k2 = 0.0, 1.0
        elif model is Model.MODIFIED_E:
            k1 = 0.5 if k1 is None else float(k1)
            k2 = 0.5 if k2 is None else float(k2)
            if k1 < 0 or k2 < 0 or k1 + k2 <= 0:
                raise ValidationError(f"the modified E-model needs k1, k2 >= 0 with k1 + k2 > 0, got ({k1}, {k2}).")
            if abs(k1 + k2 - 1.0) > 1e-12:
                logger.info("k1 + k2 = %g; the weights are usually chosen to sum to 1.", k1 + k2)
        if model is Model.P:
            if self.tau is None:
                raise ValidationError("the P-model needs an aspiration level tau.")
            object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "k1", k1)
        object.__setattr__(self, "k2", k2)
        if self.characteristics is not None:
            object.__setattr__(self, "characteristics", tuple(self.characteristics))
        if self.det_basis not in determinant_model.DET_BASES:
            raise ValidationError(f"det_basis must be one of {determinant_model.DET_BASES}, got '{self.det_basis}'.")

    @property
    def needs_fourth_moments(self):
        return self.model.is_stochastic

    @property
    def label(self):
        if self.model is Model.MODIFIED_E:
            name = f"modified E (k1={self.k1:g}, k2={self.k2:g})"
        elif self.model is Model.P:
            name = f"P (tau={self.tau:g})"
        else:
            name = self.model.value
        return f"{name} / {self.value_fn.value}"


@dataclass(frozen=True)
class SeparableTerms:
    """
    Objective of the form ``sum_h alpha_h / (n_h - shift) + offset`` with ``alpha_h >= 0``.

    Each term is convex and decreasing in ``n_h`` on ``n_h > shift``.
    """

    alpha: np.ndarray
    shift: float
    offset: float

    def evaluate(self, n):
        n = np.asarray(n, dtype=float)
        return float(np.sum(self.alpha / (n - self.shift)) + self.offset)


@dataclass(frozen=True, eq=False)
class ObjectiveHandle:
    """
    Evaluator of one model over allocations of one design.

    :param design: The survey design.
    :param spec: The model specification.
    :param function: Maps an allocation vector to the objective value.
    :param gradient_function: Analytic gradient, when available.
    :param separable: Closed-form separable representation, when one exists.
    :param characteristics: Resolved 0-based characteristic selection.
    """

    design: object
    spec: ModelSpec
    function: Callable
    gradient_function: Optional[Callable] = None
    separable: Optional[SeparableTerms] = None
    characteristics: Tuple[int, ...] = field(default=())

    def evaluate(self, n):
        """Objective value at allocation ``n`` (fractional values allowed for relaxations)."""
        return float(self.function(self.design.check_sizes(n)))

    __call__ = evaluate

    def gradient(self, n):
        if self.gradient_function is None:
            return None
        return np.asarray(self.gradient_function(self.design.check_sizes(n)), dtype=float)


class ObjectiveBuilder:
    """
    Build objective handles for a survey design.

    :param design: A :class:`~stratalloc.core.strata.SurveyDesign`.
    """

    def __init__(self, design):
        self.design = design
        self.W = moment_formulas.weights(design)

    def resolve_characteristics(self, spec):
        if spec.characteristics is None:
            return tuple(range(self.design.G))
        resolved = sorted({self.design.characteristic_index(key) for key in spec.characteristics})
        return tuple(resolved)

    def build(self, spec):
        """
        Build the evaluator for ``spec``.

        :raises MissingMomentError: If a stochastic model lacks fourth moments.
        :raises UnsupportedModelError: For stochastic eigenvalue models and determinant models with G != 2.
        """
        characteristics = self.resolve_characteristics(spec)
        if spec.value_fn is ValueFunction.TRACE:
            handle = self._trace_objective(spec, characteristics)
        elif spec.model is Model.DETERMINISTIC:
            handle = self._matrix_objective(spec, characteristics)
        elif spec.value_fn is ValueFunction.DETERMINANT:
            handle = self._determinant_objective(spec, characteristics)
        else:
            raise UnsupportedModelError(
                f"stochastic models are not available for the {spec.value_fn.value} value function; "
                "use the deterministic model."
            )
        logger.debug("Built objective %s over characteristics %s", spec.label, characteristics)
        return handle

    def _trace_objective(self, spec, characteristics):
        design, W, N = self.design, self.W, self.design.N
        t = moment_formulas.trace_terms(design, characteristics)

        if spec.model is Model.DETERMINISTIC:
            separable = SeparableTerms(alpha=W**2 * t, shift=0.0, offset=-float(np.sum(W * t)) / N)

            def gradient(n):
                return -(W**2) * t / n**2

            return ObjectiveHandle(design, spec, separable.evaluate, gradient, separable, characteristics)

        # a_h * n_h / (n_h - 1) == (W_h^2 - W_h / N) / (n_h - 1) - W_h / N
        core = (W**2 - W / N) * t
        offset = -float(np.sum(W * t)) / N

        def expectation(n):
            return float(np.sum(core / (n - 1.0))) + offset

        def expectation_gradient(n):
            return -core / (n - 1.0) ** 2

        if spec.model is Model.E or (spec.model is Model.MODIFIED_E and spec.k2 == 0.0):
            k1 = spec.k1
            separable = SeparableTerms(alpha=k1 * core, shift=1.0, offset=k1 * offset)
            return ObjectiveHandle(
                design, spec, separable.evaluate, lambda n: k1 * expectation_gradient(n), separable, characteristics
            )

        q = moment_formulas.trace_kernel_terms(design, characteristics)

        def variance(n):
            a = W**2 / n - W / N
            return float(np.sum(a**2 * n / (n - 1.0) ** 2 * q))

        def variance_gradient(n):
            a = W**2 / n - W / N
            da = -(W**2) / n**2
            return q * (2.0 * a * da * n / (n - 1.0) ** 2 - a**2 * (n + 1.0) / (n - 1.0) ** 3)

        if spec.model is Model.P:
            tau = spec.tau

            def p_value(n):
                spread = np.sqrt(variance(n))
                gap = tau - expectation(n)
                if spread == 0.0:
                    return 0.0 if gap == 0.0 else float(np.copysign(np.inf, gap))
                return gap / spread

            def p_gradient(n):
                V = variance(n)
                if V == 0.0:
                    return np.zeros_like(n)
                gap = tau - expectation(n)
                return -expectation_gradient(n) / np.sqrt(V) - gap * variance_gradient(n) / (2.0 * V**1.5)

            return ObjectiveHandle(design, spec, p_value, p_gradient, None, characteristics)

        k1, k2 = spec.k1, spec.k2

        def modified(n):
            return k1 * expectation(n) + k2 * np.sqrt(variance(n))

        def modified_gradient(n):
            V = variance(n)
            spread_gradient = variance_gradient(n) / (2.0 * np.sqrt(V)) if V > 0.0 else np.zeros_like(n)
            return k1 * expectation_gradient(n) + k2 * spread_gradient

        return ObjectiveHandle(design, spec, modified, modified_gradient, None, characteristics)

    def _matrix_objective(self, spec, characteristics):
        design = self.design
        index = np.ix_(characteristics, characteristics)
        value_fn = spec.value_fn

        def value(n):
            block = moment_formulas.cov_yst_hat(design, n)[index]
            if value_fn is ValueFunction.DETERMINANT:
                return float(linalg.det(block))
            eigenvalues = linalg.eigvalsh(block)
            return float(eigenvalues[-1] if value_fn is ValueFunction.LAMBDA_MAX else eigenvalues[0])

        return ObjectiveHandle(design, spec, value, None, None, characteristics)

    def _determinant_objective(self, spec, characteristics):
        design = self.design
        if design.G != 2 or len(characteristics) != 2:
            raise UnsupportedModelError(
                "stochastic determinant models have a closed form only for exactly two characteristics."
            )
        # fail early on missing inputs
        determinant_model.det_model_N(design, np.full(design.H, 2.0))
        basis = spec.det_basis
        if basis == "vec":
            logger.warning(
                "The vec-form N matrix is singular for two characteristics, so %s does not vary with the "
                "allocation; consider det_basis='vech'.",
                spec.label,
            )

        def det_n(n):
            det_value = determinant_model.determinant(determinant_model.det_model_N(design, n), basis)
            return determinant_model.clamp_determinant(det_value, warn=False)

        if spec.model is Model.P:
            tau = spec.tau

            def p_value(n):
                return tau * det_n(n) ** 0.25

            return ObjectiveHandle(design, spec, p_value, None, None, characteristics)

        k1, k2 = spec.k1, spec.k2

        def modified(n):
            det_value = det_n(n)
            expectation = determinant_model.expectation_from_determinant(det_value)
            variance = determinant_model.variance_from_determinant(det_value)
            return k1 * expectation + k2 * np.sqrt(variance)

        return ObjectiveHandle(design, spec, modified, None, None, characteristics)


def build_objective(design, spec):
    """Build the :class:`ObjectiveHandle` of ``spec`` over ``design``."""
    return ObjectiveBuilder(design).build(spec)

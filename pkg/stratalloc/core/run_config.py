import json
import logging
import os
from dataclasses import dataclass, fields, replace
from typing import Optional, Tuple

from stratalloc.core.exceptions import ValidationError
from stratalloc.core.strata import CostBudget, TotalSampleBudget

logger = logging.getLogger(__name__)

WORKERS_ENV = "STRATALLOC_WORKERS"
FORMATS = ("text", "json")


@dataclass(frozen=True)
class RunConfig:
    """
    Everything one solve or comparison run needs.

    :param data: Dataset path or bundled dataset name.
    :param mode: ``"summary"``, ``"raw"`` or None to detect from the file.
    :param model: Model name (``deterministic``, ``modified-e``, ``e``, ``v``, ``p``).
    :param value_fn: Value function name (``trace``, ``det``, ``lambda-max``, ``lambda-min``).
    :param characteristics: Characteristic names or 1-based positions the value function is restricted to.
    :param total_n: Total sample size budget.
    :param costs: Per-unit stratum costs of a cost budget (with ``c0`` and ``budget``).
    :param distribution: Synthesize fourth moments from populations of this shape when the data has none.
    :param seed: Root seed of every random stream of the run.
    :param workers: Parallel workers; ``None`` defers to ``STRATALLOC_WORKERS``.
    """

    data: Optional[str] = None
    mode: Optional[str] = None
    model: str = "deterministic"
    value_fn: str = "trace"
    k1: Optional[float] = None
    k2: Optional[float] = None
    tau: Optional[float] = None
    characteristics: Optional[Tuple[str, ...]] = None
    det_basis: str = "vech"
    total_n: Optional[int] = None
    costs: Optional[Tuple[float, ...]] = None
    c0: float = 0.0
    budget: Optional[float] = None
    max_nodes: int = 100_000
    restarts: int = 4
    distribution: Optional[str] = None
    seed: int = 0
    workers: Optional[int] = None
    report: Optional[str] = None
    format: str = "text"

    @classmethod
    def from_file(cls, path, **overrides):
        """
        Read a JSON run file; keyword overrides that are not None replace file values.

        :raises FileNotFoundError: If the file does not exist.
        :raises ValidationError: For unknown keys or malformed JSON.
        """
        try:
            with open(path, mode="r", encoding="utf-8") as file:
                values = json.load(file)
        except FileNotFoundError:
            raise FileNotFoundError(f"File not found: {path}") from None
        except json.JSONDecodeError as error:
            raise ValidationError(f"{path}: invalid JSON ({error}).") from None
        if not isinstance(values, dict):
            raise ValidationError(f"{path}: a run file must hold a JSON object.")
        known = {item.name for item in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValidationError(f"{path}: unknown keys.", unknown)
        for key in ("characteristics", "costs"):
            if values.get(key) is not None:
                values[key] = tuple(values[key])
        config = cls(**values)
        return config.merged(**overrides)

    def merged(self, **overrides):
        """Copy with every non-None override applied."""
        return replace(self, **{key: value for key, value in overrides.items() if value is not None})

    @property
    def resolved_workers(self):
        if self.workers is not None:
            return self.workers
        value = os.environ.get(WORKERS_ENV)
        if not value:
            return 1
        try:
            return int(value)
        except ValueError:
            raise ValidationError(f"{WORKERS_ENV} must be an integer, got '{value}'.") from None

    def budget_object(self):
        """
        The budget described by this config, or None.

        :raises ValidationError: If both or an incomplete cost budget are given.
        """
        if self.total_n is not None and self.costs is not None:
            raise ValidationError("give either a total sample size or a cost budget, not both.")
        if self.total_n is not None:
            return TotalSampleBudget(int(self.total_n))
        if self.costs is not None:
            if self.budget is None:
                raise ValidationError("a cost budget needs the total budget C.")
            return CostBudget(tuple(float(c) for c in self.costs), float(self.c0), float(self.budget))
        return None

    def validate(self):
        """
        Check the fields that do not depend on the dataset.

        :raises ValidationError: With one entry per problem found.
        """
        problems = []
        if not self.data:
            problems.append("a dataset is required.")
        if self.mode not in (None, "summary", "raw"):
            problems.append(f"mode must be 'summary' or 'raw', got '{self.mode}'.")
        if self.format not in FORMATS:
            problems.append(f"format must be one of {FORMATS}, got '{self.format}'.")
        if self.resolved_workers < 1:
            problems.append("workers must be >= 1.")
        if self.max_nodes < 1 or self.restarts < 0:
            problems.append("max_nodes must be >= 1 and restarts >= 0.")
        try:
            self.budget_object()
        except ValidationError as error:
            problems.append(str(error))
        if problems:
            raise ValidationError("invalid run configuration.", problems)
        return self

    def to_dict(self):
        """Config echo for reports; the worker count is left out because it never changes results."""
        return {item.name: _plain(getattr(self, item.name)) for item in fields(self) if item.name not in ("workers", "report")}


def _plain(value):
    if isinstance(value, tuple):
        return list(value)
    return value

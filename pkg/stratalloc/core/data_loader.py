"""
Loading and exporting survey designs.

Three formats are understood (grammar in docs/formats.md):
    * summary CSV: one row per stratum with ``stratum, N_h`` and the vech-ordered
      covariance entries ``s_11, s_12, ...`` (optional ``pilot_n`` and ``m4_a_b`` columns);
    * raw CSV: one row per pilot unit with ``stratum, N_h`` and one column per characteristic;
    * JSON design document (``"format": "stratalloc-design"``).
"""

import csv
import json
import logging
import os
import re

import numpy as np

from stratalloc.core import matrix_kit
from stratalloc.core.exceptions import ValidationError
from stratalloc.core.strata import CostBudget, StratumSummary, SurveyDesign, TotalSampleBudget

logger = logging.getLogger(__name__)

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))), "data")
DOCUMENT_FORMAT = "stratalloc-design"
MODES = ("summary", "raw")

_COVARIANCE_COLUMN = re.compile(r"^s_(\d+)_?(\d+)$")
_SPLIT_COVARIANCE_COLUMN = re.compile(r"^s_(\d+)_(\d+)$")
_M4_COLUMN = re.compile(r"^m4_(\d+)_(\d+)$")
_NAMES_DIRECTIVE = re.compile(r"^#\s*characteristics\s*:(.*)$", re.IGNORECASE)


def resolve_dataset_path(name, data_dir=DATA_DIR):
    """
    Locate a dataset: the path itself, then the bundled ``data/`` directory,
    trying ``.csv`` and ``.json`` suffixes for bare names.

    :raises FileNotFoundError: If nothing matches.
    """
    candidates = [name]
    if not os.path.isabs(name):
        candidates.append(os.path.join(data_dir, name))
    if not os.path.splitext(name)[1]:
        candidates += [candidate + suffix for candidate in list(candidates) for suffix in (".csv", ".json")]
    for candidate in candidates:
        if os.path.isfile(candidate):
            return candidate
    raise FileNotFoundError(f"File not found: {name}")


def _number(text, where):
    try:
        value = float(str(text).strip())
    except ValueError:
        raise ValidationError(f"{where}: '{text}' is not a number.") from None
    if not np.isfinite(value):
        raise ValidationError(f"{where}: non-finite value '{text}'.")
    return value


def _count(text, where):
    value = _number(text, where)
    if not value.is_integer():
        raise ValidationError(f"{where}: '{text}' is not an integer.")
    return int(value)


class DesignLoader:
    """
    Load a :class:`~stratalloc.core.strata.SurveyDesign` from a file.

    :param file_path: Path or bundled dataset name (``table1``, ``toy_h2``).
    :param mode: ``"summary"`` or ``"raw"`` for CSV files; detected from the header when None.
    """

    def __init__(self, file_path, mode=None):
        if mode is not None and mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got '{mode}'.")
        self.file_path = file_path
        self.mode = mode
        self.names = ()

    def load_design(self):
        """
        Read and validate the design.

        :raises FileNotFoundError: If the file does not exist.
        :raises ValidationError: If the file is empty, malformed or violates an invariant.
        """
        path = resolve_dataset_path(self.file_path)
        if path.endswith(".json"):
            with open(path, mode="r", encoding="utf-8") as file:
                try:
                    document = json.load(file)
                except json.JSONDecodeError as error:
                    raise ValidationError(f"{path}: invalid JSON ({error}).") from None
            return design_from_document(document, path)

        header, rows = self._read_csv(path)
        mode = self.mode or ("summary" if any(_COVARIANCE_COLUMN.match(column) for column in header) else "raw")
        logger.debug("Loading %s in %s mode", path, mode)
        if mode == "summary":
            return self._summary_design(path, header, rows)
        return self._raw_design(path, header, rows)

    def _data_lines(self, file, line_numbers):
        for line_number, line in enumerate(file, start=1):
            stripped = line.strip()
            if stripped.startswith("#"):
                directive = _NAMES_DIRECTIVE.match(stripped)
                if directive:
                    self.names = tuple(name.strip() for name in directive.group(1).split(",") if name.strip())
                continue
            line_numbers.append(line_number)
            yield line

    def _read_csv(self, path):
        rows = []
        header = None
        line_numbers = []
        with open(path, mode="r", encoding="utf-8", newline="") as file:
            reader = csv.reader(self._data_lines(file, line_numbers))
            consumed = 0
            for record in reader:
                # a quoted field may span lines; report the line the record starts on
                line_number = line_numbers[consumed]
                consumed = reader.line_num
                cells = [cell.strip() for cell in record]
                if not any(cells):
                    continue
                if header is None:
                    header = cells
                else:
                    rows.append((line_number, cells))
        if not header:
            raise ValidationError(f"{path}: the file is empty or has no header row.")
        for required in ("stratum", "N_h"):
            if required not in header:
                raise ValidationError(f"{path}: missing required column '{required}'.")
        if not rows:
            raise ValidationError(f"{path}: no data rows.")
        for line_number, cells in rows:
            if len(cells) != len(header):
                raise ValidationError(f"{path}, line {line_number}: expected {len(header)} fields, found {len(cells)}.")
        return header, rows

    def _summary_design(self, path, header, rows):
        index = {column: position for position, column in enumerate(header)}
        covariance_columns = {}
        for column in header:
            match = _COVARIANCE_COLUMN.match(column)
            if match:
                if _SPLIT_COVARIANCE_COLUMN.match(column):
                    i, j = int(match.group(1)), int(match.group(2))
                else:
                    digits = match.group(1) + match.group(2)
                    if len(digits) != 2:
                        raise ValidationError(f"{path}: ambiguous column '{column}'; use s_i_j.")
                    i, j = int(digits[0]), int(digits[1])
                covariance_columns[(min(i, j), max(i, j))] = column
        if not covariance_columns:
            raise ValidationError(f"{path}: summary files need covariance columns s_i_j.")
        G = max(j for _, j in covariance_columns)
        expected = {(i, j) for j in range(1, G + 1) for i in range(1, j + 1)}
        if set(covariance_columns) != expected:
            missing = sorted(expected - set(covariance_columns))
            raise ValidationError(
                f"{path}: covariance columns must cover s_i_j for 1 <= i <= j <= {G}.",
                [f"missing s_{i}_{j}" for i, j in missing],
            )
        k = matrix_kit.vech_length(G)
        m4_columns = {}
        for column in header:
            match = _M4_COLUMN.match(column)
            if match:
                a, b = int(match.group(1)), int(match.group(2))
                m4_columns[(min(a, b), max(a, b))] = column
        if m4_columns:
            expected_m4 = {(a, b) for b in range(1, k + 1) for a in range(1, b + 1)}
            if set(m4_columns) != expected_m4:
                raise ValidationError(f"{path}: m4 columns must cover m4_a_b for 1 <= a <= b <= {k}.")

        strata, problems = [], []
        for line_number, cells in rows:
            where = f"{path}, line {line_number}"
            try:
                stratum_id = cells[index["stratum"]]
                covariance = np.zeros((G, G))
                for (i, j), column in covariance_columns.items():
                    value = _number(cells[index[column]], f"{where}, field {column}")
                    covariance[i - 1, j - 1] = covariance[j - 1, i - 1] = value
                m4_vech = None
                if m4_columns:
                    m4_vech = np.zeros((k, k))
                    for (a, b), column in m4_columns.items():
                        value = _number(cells[index[column]], f"{where}, field {column}")
                        m4_vech[a - 1, b - 1] = m4_vech[b - 1, a - 1] = value
                pilot = None
                if "pilot_n" in index and cells[index["pilot_n"]] not in ("", "NA"):
                    pilot = _count(cells[index["pilot_n"]], f"{where}, field pilot_n")
                strata.append(
                    StratumSummary(
                        stratum_id=stratum_id,
                        population_size=_count(cells[index["N_h"]], f"{where}, field N_h"),
                        covariance=covariance,
                        m4_vech=m4_vech,
                        pilot_size=pilot,
                    )
                )
            except ValidationError as error:
                problems.append(f"line {line_number}: {error}")
        if problems:
            raise ValidationError(f"{path}: invalid strata.", problems)
        return SurveyDesign(tuple(strata), None, self.names)

    def _raw_design(self, path, header, rows):
        index = {column: position for position, column in enumerate(header)}
        value_columns = [column for column in header if column not in ("stratum", "N_h")]
        if not value_columns:
            raise ValidationError(f"{path}: raw pilot files need at least one characteristic column.")
        names = self.names or tuple(value_columns)
        groups = {}
        for line_number, cells in rows:
            where = f"{path}, line {line_number}"
            stratum_id = cells[index["stratum"]]
            size = _count(cells[index["N_h"]], f"{where}, field N_h")
            values = [_number(cells[index[column]], f"{where}, field {column}") for column in value_columns]
            group = groups.setdefault(stratum_id, {"N_h": size, "rows": [], "line": line_number})
            if group["N_h"] != size:
                raise ValidationError(f"{where}: stratum '{stratum_id}' has conflicting N_h values.")
            group["rows"].append(values)

        strata = [summarize_pilot(stratum_id, group["N_h"], np.array(group["rows"])) for stratum_id, group in groups.items()]
        return SurveyDesign(tuple(strata), None, names)


def summarize_pilot(stratum_id, population_size, pilot):
    """
    Plug-in statistics of one pilot sample: covariance with divisor ``rows - 1``,
    fourth moments with divisor ``rows``.

    :raises ValidationError: If the pilot has fewer than 2 rows or more rows than ``N_h``.
    """
    from stratalloc.processing.moment_formulas import fourth_moment_vec, fourth_moment_vech, sample_covariance

    pilot = np.atleast_2d(np.asarray(pilot, dtype=float))
    if pilot.shape[0] < 2:
        raise ValidationError(f"stratum '{stratum_id}' has {pilot.shape[0]} pilot rows; at least 2 are needed.")
    covariance = sample_covariance(pilot)
    summary = StratumSummary(
        stratum_id=stratum_id,
        population_size=population_size,
        covariance=covariance,
        m4_vech=fourth_moment_vech(pilot),
        m4_vec=fourth_moment_vec(pilot),
        pilot_size=pilot.shape[0],
    )
    if np.all(covariance == 0.0):
        logger.warning("Stratum '%s' has constant pilot rows; its covariance and fourth moments are zero.", stratum_id)
    elif not summary.kernel_is_psd():
        logger.warning("Stratum '%s': plug-in fourth-moment kernel is not positive semidefinite.", stratum_id)
    return summary


def _budget_from_document(budget, where):
    if budget is None:
        return None
    if "total_n" in budget:
        return TotalSampleBudget(_count(budget["total_n"], f"{where}, budget.total_n"))
    try:
        return CostBudget(tuple(float(c) for c in budget["costs"]), float(budget["c0"]), float(budget["C"]))
    except (KeyError, TypeError, ValueError):
        raise ValidationError(f"{where}: budget needs 'total_n' or 'costs', 'c0' and 'C'.") from None


def design_from_document(document, where="document"):
    """
    Build a design from a parsed JSON design document.

    :raises ValidationError: If the document does not follow the ``stratalloc-design`` schema.
    """
    if not isinstance(document, dict) or document.get("format") != DOCUMENT_FORMAT:
        raise ValidationError(f"{where}: not a '{DOCUMENT_FORMAT}' document.")
    entries = document.get("strata")
    if not isinstance(entries, list) or not entries:
        raise ValidationError(f"{where}: 'strata' must be a non-empty list.")
    strata, problems = [], []
    for position, entry in enumerate(entries, start=1):
        try:
            strata.append(
                StratumSummary(
                    stratum_id=str(entry["id"]),
                    population_size=_count(entry["N_h"], f"stratum {position}, N_h"),
                    covariance=np.array(entry["covariance"], dtype=float),
                    m4_vech=None if entry.get("m4_vech") is None else np.array(entry["m4_vech"], dtype=float),
                    m4_vec=None if entry.get("m4_vec") is None else np.array(entry["m4_vec"], dtype=float),
                    pilot_size=entry.get("pilot_n"),
                )
            )
        except KeyError as error:
            problems.append(f"stratum {position}: missing field {error}")
        except ValidationError as error:
            problems.append(f"stratum {position}: {error}")
    if problems:
        raise ValidationError(f"{where}: invalid strata.", problems)
    names = tuple(document.get("characteristics") or ())
    design = SurveyDesign(tuple(strata), None, names)
    return design.with_budget(_budget_from_document(document.get("budget"), where))


def design_to_document(design):
    """Serialize ``design`` into a ``stratalloc-design`` JSON-compatible dict."""
    budget = design.budget
    if isinstance(budget, TotalSampleBudget):
        budget_entry = {"total_n": budget.total_n}
    elif isinstance(budget, CostBudget):
        budget_entry = {"costs": list(budget.costs), "c0": budget.c0, "C": budget.C}
    else:
        budget_entry = None
    return {
        "format": DOCUMENT_FORMAT,
        "version": 1,
        "characteristics": list(design.characteristic_names),
        "budget": budget_entry,
        "strata": [
            {
                "id": stratum.stratum_id,
                "N_h": stratum.population_size,
                "pilot_n": stratum.pilot_size,
                "covariance": stratum.covariance.tolist(),
                "m4_vech": None if stratum.m4_vech is None else stratum.m4_vech.tolist(),
                "m4_vec": None if stratum.m4_vec is None else stratum.m4_vec.tolist(),
            }
            for stratum in design.strata
        ],
    }


def load_summary(path):
    """Load a summary-statistics dataset (CSV or JSON)."""
    return DesignLoader(path, mode="summary").load_design()


def load_raw(path):
    """Load a raw pilot dataset and compute its plug-in statistics."""
    return DesignLoader(path, mode="raw").load_design()


def export_summary(design, path):
    """
    Write ``design`` as a JSON design document; reloading it reproduces the design exactly.

    :return: The path written.
    """
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, mode="w", encoding="utf-8") as file:
        json.dump(design_to_document(design), file, indent=2)
        file.write("\n")
    logger.info("Design with %d strata written to %s", design.H, path)
    return path

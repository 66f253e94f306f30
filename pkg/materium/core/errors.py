"""
@file errors.py
@brief Exception hierarchy shared by every Materium module.

@details
Three families, mapped to CLI exit codes by @ref materium.cli:
- @ref DataError   : bad input data (exit code 2)
- @ref ConfigError : invalid configuration, detected before any compute (exit code 1)
- @ref ModelError  : runtime failures of the numerical pipeline (exit code 3)
"""

from __future__ import annotations

from typing import List, Optional, Tuple


class MateriumError(Exception):
    """@brief Base class of all Materium errors."""


# ---------- data ----------

class DataError(MateriumError):
    """@brief Input data is malformed or inconsistent with the loaded tables."""


class ParseError(DataError):
    """
    @brief One or more corpus lines could not be parsed.
    @param line 1-based line number of the first failure (None for whole-file problems)
    @param reason human readable reason
    @param issues every (line, reason) pair collected during a strict parse
    """

    def __init__(self, line: Optional[int], reason: str,
                 issues: Optional[List[Tuple[int, str]]] = None) -> None:
        self.line = line
        self.reason = reason
        self.issues = list(issues) if issues else ([(line, reason)] if line is not None else [])
        where = f"line {line}: " if line is not None else ""
        extra = f" (+{len(self.issues) - 1} more)" if len(self.issues) > 1 else ""
        super().__init__(f"{where}{reason}{extra}")


class EmptyCorpus(DataError):
    pass


class UnknownElement(DataError):
    pass


class UnknownElementOxi(DataError):
    pass


class OutOfRange(DataError):
    pass


class GrammarError(DataError):
    """
    @brief A token sequence violates the material grammar.
    @param position index of the offending token (len(sequence) for truncation)
    @param expected name of the token class the grammar expected there
    """

    def __init__(self, position: int, expected: str, found: Optional[str] = None) -> None:
        self.position = position
        self.expected = expected
        self.found = found
        msg = f"position {position}: expected {expected}"
        if found is not None:
            msg += f", found {found}"
        super().__init__(msg)


class EmptyTable(DataError):
    pass


class NegativeValue(DataError):
    pass


class TooSmall(DataError):
    pass


class TooFewSamples(DataError):
    pass


class StoichOutOfTable(DataError):
    pass


class UnknownCondition(DataError):
    pass


class DegenerateCell(DataError):
    pass


class CheckpointMismatch(DataError):
    pass


class EmptyTargets(DataError):
    pass


# ---------- config ----------

class ConfigError(MateriumError):
    """@brief A configuration value failed validation."""


# ---------- model / runtime ----------

class ModelError(MateriumError):
    """@brief Failure inside the numerical pipeline."""


class SequenceTooLong(ModelError):
    pass


class OddHeadDim(ModelError):
    pass


class NonFiniteLoss(ModelError):
    def __init__(self, batch_index: int, loss: float) -> None:
        self.batch_index = batch_index
        self.loss = loss
        super().__init__(f"non-finite loss {loss} at batch {batch_index}")


class NoAllowedToken(ModelError):
    pass


class NonConvergence(ModelError):
    pass

"""Black-box models whose explanations are studied.

All models are deterministic real-valued functions of a TF-IDF vector:
products of word-presence indicators, small decision trees expanded into
signed indicator products, linear functions of the TF-IDF coordinates,
and linear combinations of any of these.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .corpus import TfIdfVector


class Model:
    """Deterministic, total function of a TF-IDF vector.

    `bound` is a known upper bound of |f| on unit-norm inputs (None when
    unknown); it feeds sample-size diagnostics only.
    """

    @property
    def bound(self) -> float | None:
        return None

    def evaluate(self, phi: TfIdfVector) -> float:
        raise NotImplementedError

    def evaluate_matrix(self, values: np.ndarray, words: Sequence[str]) -> np.ndarray:
        """Evaluate on a batch: row i of `values` holds the coordinates of
        sample i for `words`; all other coordinates are zero.

        Subclasses override this with vectorized paths; the fallback loops.
        """
        out = np.empty(len(values))
        for i, row in enumerate(values):
            phi = TfIdfVector(
                coordinates={w: float(v) for w, v in zip(words, row) if v != 0.0}
            )
            out[i] = self.evaluate(phi)
        return out


@dataclass(frozen=True)
class IndicatorProduct(Model):
    """coefficient * prod_{w in words} 1{phi_w > 0}; empty product is 1."""

    words: frozenset[str]
    coefficient: float = 1.0

    @property
    def bound(self) -> float:
        return abs(self.coefficient)

    def evaluate(self, phi: TfIdfVector) -> float:
        if all(phi.get(w) > 0.0 for w in self.words):
            return self.coefficient
        return 0.0

    def evaluate_matrix(self, values: np.ndarray, words: Sequence[str]) -> np.ndarray:
        index = {w: j for j, w in enumerate(words)}
        mask = np.ones(len(values), dtype=bool)
        for w in self.words:
            j = index.get(w)
            if j is None:
                return np.zeros(len(values))
            mask &= values[:, j] > 0.0
        return np.where(mask, self.coefficient, 0.0)


@dataclass(frozen=True)
class TreeModel(Model):
    """A decision rule over word presence, stored pre-expanded as a sum of
    signed indicator products."""

    terms: tuple[IndicatorProduct, ...]

    @property
    def bound(self) -> float:
        return math.fsum(abs(t.coefficient) for t in self.terms)

    def evaluate(self, phi: TfIdfVector) -> float:
        return math.fsum(t.evaluate(phi) for t in self.terms)

    def evaluate_matrix(self, values: np.ndarray, words: Sequence[str]) -> np.ndarray:
        out = np.zeros(len(values))
        for term in self.terms:
            out += term.evaluate_matrix(values, words)
        return out


@dataclass(frozen=True)
class LinearModel(Model):
    """sum_w coefficients[w] * phi_w over the words it names."""

    coefficients: Mapping[str, float]

    @property
    def bound(self) -> float:
        return math.sqrt(math.fsum(c * c for c in self.coefficients.values()))

    def evaluate(self, phi: TfIdfVector) -> float:
        return math.fsum(c * phi.get(w) for w, c in self.coefficients.items())

    def evaluate_matrix(self, values: np.ndarray, words: Sequence[str]) -> np.ndarray:
        index = {w: j for j, w in enumerate(words)}
        lam = np.zeros(values.shape[1])
        for w, c in self.coefficients.items():
            j = index.get(w)
            if j is not None:
                lam[j] = c
        return values @ lam


@dataclass(frozen=True)
class CombinedModel(Model):
    """Coefficient-weighted sum of arbitrary models."""

    parts: tuple[tuple[float, Model], ...]

    @property
    def bound(self) -> float | None:
        total = 0.0
        for a, m in self.parts:
            if m.bound is None:
                return None
            total += abs(a) * m.bound
        return total

    def evaluate(self, phi: TfIdfVector) -> float:
        return math.fsum(a * m.evaluate(phi) for a, m in self.parts)

    def evaluate_matrix(self, values: np.ndarray, words: Sequence[str]) -> np.ndarray:
        out = np.zeros(len(values))
        for a, m in self.parts:
            out += a * m.evaluate_matrix(values, words)
        return out


def _as_terms(model: Model) -> tuple[IndicatorProduct, ...] | None:
    if isinstance(model, IndicatorProduct):
        return (model,)
    if isinstance(model, TreeModel):
        return model.terms
    return None


def combine(parts: Sequence[tuple[float, Model]]) -> Model:
    """Weighted sum of models.

    When every part is built from indicator products the result is merged
    back into a TreeModel (same-support terms collapse, zero coefficients
    drop), which keeps the closed-form explanation path available.
    """
    term_lists = [(a, _as_terms(m)) for a, m in parts]
    if all(terms is not None for _, terms in term_lists):
        merged: dict[frozenset[str], float] = {}
        for a, terms in term_lists:
            for t in terms:  # type: ignore[union-attr]
                merged[t.words] = merged.get(t.words, 0.0) + a * t.coefficient
        terms = tuple(
            IndicatorProduct(words=k, coefficient=v)
            for k, v in sorted(merged.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))
            if v != 0.0
        )
        return TreeModel(terms=terms)
    return CombinedModel(parts=tuple((float(a), m) for a, m in parts))


class TreeSpecError(ValueError):
    """Malformed tree expression; carries the offending position."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"parse error at position {position}: {message}")
        self.position = position


class _TreeParser:
    """Recursive-descent parser for the tree mini-DSL.

    Grammar (whitespace insignificant):
        expr   := term ('+' term)*
        term   := factor ('&' factor)*
        factor := '!' factor | '(' expr ')' | '"' word '"'

    A quoted word is the presence indicator of that word; '&' multiplies,
    '!' complements, '+' adds. The result is expanded into a multilinear
    polynomial keyed by word sets (indicators are idempotent, so a product
    is the indicator of the union).
    """

    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def parse(self) -> dict[frozenset[str], float]:
        poly = self._expr()
        self._skip_ws()
        if self.pos != len(self.text):
            raise TreeSpecError(
                f"unexpected character {self.text[self.pos]!r}", self.pos
            )
        return poly

    def _skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _expr(self) -> dict[frozenset[str], float]:
        poly = self._term()
        while self._peek() == "+":
            self.pos += 1
            for k, v in self._term().items():
                poly[k] = poly.get(k, 0.0) + v
        return poly

    def _term(self) -> dict[frozenset[str], float]:
        poly = self._factor()
        while self._peek() == "&":
            self.pos += 1
            rhs = self._factor()
            product: dict[frozenset[str], float] = {}
            for k1, v1 in poly.items():
                for k2, v2 in rhs.items():
                    key = k1 | k2
                    product[key] = product.get(key, 0.0) + v1 * v2
            poly = product
        return poly

    def _factor(self) -> dict[frozenset[str], float]:
        ch = self._peek()
        if ch == "!":
            self.pos += 1
            inner = self._factor()
            poly = {frozenset(): 1.0}
            for k, v in inner.items():
                poly[k] = poly.get(k, 0.0) - v
            return poly
        if ch == "(":
            self.pos += 1
            poly = self._expr()
            if self._peek() != ")":
                raise TreeSpecError("expected ')'", self.pos)
            self.pos += 1
            return poly
        if ch == '"':
            start = self.pos
            end = self.text.find('"', self.pos + 1)
            if end < 0:
                raise TreeSpecError("unterminated word quote", start)
            word = self.text[self.pos + 1 : end]
            if not word:
                raise TreeSpecError("empty quoted word", start)
            self.pos = end + 1
            return {frozenset({word}): 1.0}
        raise TreeSpecError(
            "expected '!', '(' or a quoted word" if ch else "unexpected end of input",
            self.pos,
        )


def tree_from_spec(text: str) -> TreeModel:
    """Parse a tree expression such as
    '"food" + (!"food" & "about" & "Everything")' into a TreeModel.

    The expansion drops vanishing terms and orders the rest by support
    size, then alphabetically, so equal expressions build equal models.
    """
    poly = _TreeParser(text).parse()
    terms = tuple(
        IndicatorProduct(words=k, coefficient=v)
        for k, v in sorted(poly.items(), key=lambda kv: (len(kv[0]), sorted(kv[0])))
        if v != 0.0
    )
    return TreeModel(terms=terms)


def load_linear_model(path: str | Path) -> LinearModel:
    """Load a linear model from a JSON object mapping word -> coefficient."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError("linear model JSON must be an object of word -> coefficient")
    return LinearModel(
        coefficients={str(w): float(c) for w, c in data.items()}
    )

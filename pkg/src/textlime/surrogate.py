"""Weighted (ridge) least-squares surrogate: the empirical explanation.

The surrogate regresses model responses on the binary presence features,
weighting each sample by its kernel weight. Its coefficients, one per
distinct word plus an intercept, are the explanation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Document, IdfTable, LocalDictionary, local_dictionary
from .models import Model
from .sampling import SampleBatch, sample_batch


@dataclass(frozen=True)
class Explanation:
    """Fitted surrogate coefficients for one document and model."""

    intercept: float
    coefficients: dict
    local: LocalDictionary
    meta: dict

    @property
    def words(self) -> tuple[str, ...]:
        return self.local.words

    def coefficient_array(self) -> np.ndarray:
        return np.array([self.coefficients[w] for w in self.local.words])

    def ranked(self) -> list[tuple[str, float]]:
        """Words and coefficients sorted by decreasing magnitude."""
        return sorted(
            self.coefficients.items(), key=lambda kv: (-abs(kv[1]), kv[0])
        )


def fit_weighted_ridge(
    design: np.ndarray,
    weights: np.ndarray,
    responses: np.ndarray,
    ridge: float = 0.0,
) -> np.ndarray:
    """Solve min_beta sum_i w_i (y_i - beta . design_i)^2 + ridge ||beta||^2.

    Solved through the normal equations with a positive-definite
    factorization; on rank deficiency (possible at tiny sample counts with
    ridge = 0) falls back to the minimum-norm least-squares solution.
    """
    design = np.asarray(design, dtype=float)
    weights = np.asarray(weights, dtype=float)
    responses = np.asarray(responses, dtype=float)
    if design.ndim != 2 or len(design) < 1:
        raise ValueError("design must be a nonempty 2-d array")
    if len(weights) != len(design) or len(responses) != len(design):
        raise ValueError("design, weights and responses must have equal length")
    if np.any(weights < 0):
        raise ValueError("sample weights must be nonnegative")
    if not np.any(weights > 0):
        raise ValueError("degenerate weights: all sample weights are zero")
    if ridge < 0:
        raise ValueError("ridge parameter must be nonnegative")

    p = design.shape[1]
    gram = design.T @ (weights[:, None] * design) + ridge * np.eye(p)
    rhs = design.T @ (weights * responses)
    try:
        np.linalg.cholesky(gram)
    except np.linalg.LinAlgError:
        sw = np.sqrt(weights)
        a = sw[:, None] * design
        b = sw * responses
        if ridge > 0:
            a = np.vstack([a, np.sqrt(ridge) * np.eye(p)])
            b = np.concatenate([b, np.zeros(p)])
        beta, *_ = np.linalg.lstsq(a, b, rcond=None)
        return beta
    return np.linalg.solve(gram, rhs)


def fit_batch(
    model: Model,
    batch: SampleBatch,
    idf: IdfTable,
    ridge: float = 0.0,
) -> Explanation:
    """Fit the surrogate on an existing sample batch.

    Responses are the model evaluated on the renormalized TF-IDF of each
    perturbed document (the renormalization after deletion is what couples
    the surrogate to the embedding, so it is never skipped).
    """
    values = batch.tfidf_matrix(idf)
    responses = model.evaluate_matrix(values, batch.local.words)
    design = np.hstack([np.ones((batch.n, 1)), batch.z.astype(float)])
    beta = fit_weighted_ridge(design, batch.weights, responses, ridge)
    return Explanation(
        intercept=float(beta[0]),
        coefficients={w: float(b) for w, b in zip(batch.local.words, beta[1:])},
        local=batch.local,
        meta={
            "n": batch.n,
            "nu": batch.nu,
            "ridge": ridge,
            "seed": batch.seed,
        },
    )


def explain(
    model: Model,
    document: Document,
    idf: IdfTable,
    *,
    n: int = 5000,
    nu: float = 0.25,
    ridge: float = 0.0,
    seed=0,
) -> Explanation:
    """Sample perturbed documents, query the model, fit the surrogate.

    Defaults follow the reference text explainer (n = 5000, nu = 0.25)
    except the ridge parameter, which defaults to 0: with n far above the
    number of distinct words the penalty is immaterial, and 0 makes the
    closed-form comparisons exact. Pass ridge = 1.0 to mirror the
    reference implementation.
    """
    if not document.tokens:
        raise ValueError("cannot explain an empty document")
    local = local_dictionary(document)
    batch = sample_batch(document, local, n, nu, seed)
    return fit_batch(model, batch, idf, ridge)

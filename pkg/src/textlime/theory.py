"""Closed-form infinite-sample explanations and their building blocks.

As the number of perturbed samples grows, the surrogate coefficients
concentrate around a population vector determined by the kernel moment
sequence alpha_p = E[weight * z_1 ... z_p], the inverse of the weighted
feature covariance (expressible through four sigma coefficients and a
normalization constant c_d), and the expected weighted responses. This
module computes those pieces exactly, specializes them to indicator
products, trees and linear models, and provides Monte Carlo estimators
that serve as independent oracles for everything else.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .corpus import Document, IdfTable, LocalDictionary, local_dictionary, tfidf_weights
from .models import Model
from .sampling import draw_feature_matrix, psi

EXACT_CLOSED_FORM = "exact-closed-form"
LARGE_BANDWIDTH = "large-bandwidth-approx"
MONTE_CARLO = "monte-carlo"

# Exact enumeration of conditional renormalization expectations walks all
# subsets of the local dictionary; beyond this size, use approx or mc.
ENUMERATION_LIMIT = 20


class ClosedFormDomainError(ValueError):
    """Raised where the closed forms need d >= 2 and the input is smaller."""


@dataclass(frozen=True)
class TheoryExplanation:
    """Population (infinite-sample) explanation with provenance.

    `provenance` records how the values were obtained: exact closed form,
    the large-bandwidth approximation, or Monte Carlo (which also carries
    standard errors).
    """

    intercept: float
    coefficients: tuple[float, ...]
    provenance: str
    words: tuple[str, ...] | None = None
    coefficient_stderr: tuple[float, ...] | None = None
    intercept_stderr: float | None = None
    notes: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return len(self.coefficients)

    def coefficient_array(self) -> np.ndarray:
        return np.array(self.coefficients)

    def with_words(self, words: Sequence[str]) -> "TheoryExplanation":
        if len(words) != self.d:
            raise ValueError("word count must match coefficient count")
        return TheoryExplanation(
            intercept=self.intercept,
            coefficients=self.coefficients,
            provenance=self.provenance,
            words=tuple(words),
            coefficient_stderr=self.coefficient_stderr,
            intercept_stderr=self.intercept_stderr,
            notes=dict(self.notes),
        )


def alpha(p: int, d: int, nu: float) -> float:
    """Expected kernel weight times p distinct presence indicators.

    Exact finite sum over the deletion count s, with exact-rounded
    accumulation: (1/d) sum_s prod_{k<p} (d-s-k)/(d-k) * psi(s/d).
    """
    return alpha_values(d, nu, p)[p]


def alpha_values(d: int, nu: float, p_max: int) -> list[float]:
    """alpha_0 .. alpha_{p_max} in one pass over the deletion counts."""
    if d < 1:
        raise ValueError("d must be at least 1")
    if not 0 <= p_max <= d:
        raise ValueError("order p must lie in 0..d")
    terms: list[list[float]] = [[] for _ in range(p_max + 1)]
    for s in range(1, d + 1):
        value = psi(s / d, nu)
        terms[0].append(value)
        for k in range(p_max):
            value *= (d - s - k) / (d - k)
            terms[k + 1].append(value)
    return [math.fsum(column) / d for column in terms]


def alpha_limit(p: int, d: int) -> float:
    """Large-bandwidth limit of alpha_p: (d - p) / ((p + 1) d)."""
    if not 0 <= p <= d:
        raise ValueError("order p must lie in 0..d")
    return (d - p) / ((p + 1) * d)


def alpha_bounds(p: int, d: int, nu: float) -> tuple[float, float]:
    """Proved envelope of alpha_p: limit * exp(-1/(2 nu^2)) below, limit above."""
    limit = alpha_limit(p, d)
    return limit * math.exp(-1.0 / (2.0 * nu * nu)), limit


@dataclass(frozen=True)
class SigmaSet:
    """Entries of the closed-form inverse covariance, plus its normalizer."""

    d: int
    nu: float
    c_d: float
    sigma0: float
    sigma1: float
    sigma2: float
    sigma3: float
    alpha0: float
    alpha1: float
    alpha2: float


def normalization_constant(d: int, nu: float) -> float:
    """The inverse-covariance normalizer (d-1) a0 a2 - d a1^2 + a0 a1.

    Evaluated through its symmetrized pairwise form
    (1 / (2 d^3)) sum_{s,t} psi(s/d) psi(t/d) (t - s)^2, whose terms are
    all nonnegative: the defining expression cancels catastrophically at
    small bandwidth (the true value can sit far below one ulp of its
    terms), this one never does.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    s = np.arange(1, d + 1, dtype=float)
    kernel = psi(s / d, nu)
    # sum_{s,t} k_s k_t (t-s)^2 = 2 [ (sum k)(sum t^2 k) - (sum t k)^2 ],
    # accumulated pairwise to keep every term nonnegative.
    diffs = (s[:, None] - s[None, :]) ** 2
    total = float(np.sum(kernel[:, None] * kernel[None, :] * diffs))
    return total / (2.0 * d**3)


def _alpha_gap(d: int, nu: float) -> float:
    """alpha_1 - alpha_2 as the direct nonnegative sum
    (1/d) sum_s (1 - s/d) (s / (d-1)) psi(s/d)."""
    s = np.arange(1, d + 1, dtype=float)
    terms = (1.0 - s / d) * (s / (d - 1)) * psi(s / d, nu)
    return float(math.fsum(terms)) / d


def sigma_set(d: int, nu: float) -> SigmaSet:
    """Closed-form inverse-covariance coefficients from alpha_0..alpha_2."""
    if d < 2:
        raise ClosedFormDomainError(
            "out of closed-form domain: sigma coefficients require d >= 2"
        )
    a0, a1, a2 = alpha_values(d, nu, 2)
    c_d = normalization_constant(d, nu)
    gap = _alpha_gap(d, nu)
    return SigmaSet(
        d=d,
        nu=nu,
        c_d=c_d,
        sigma0=(d - 1) * a2 + a1,
        sigma1=-a1,
        # (d-2) a0 a2 - (d-1) a1^2 + a0 a1 rewritten as c_d + (a1^2 - a0 a2)
        # so the stable normalizer is reused.
        sigma2=(c_d + a1 * a1 - a0 * a2) / gap,
        sigma3=(a1 * a1 - a0 * a2) / gap,
        alpha0=a0,
        alpha1=a1,
        alpha2=a2,
    )


def sigma_matrix(d: int, nu: float) -> np.ndarray:
    """Weighted feature covariance: block pattern in alpha_0, alpha_1, alpha_2."""
    if d < 2:
        raise ClosedFormDomainError("covariance block pattern requires d >= 2")
    a0, a1, a2 = alpha_values(d, nu, 2)
    m = np.full((d + 1, d + 1), a2)
    m[0, :] = a1
    m[:, 0] = a1
    np.fill_diagonal(m, a1)
    m[0, 0] = a0
    return m


def sigma_inverse(d: int, nu: float) -> np.ndarray:
    """Closed-form inverse of the weighted feature covariance."""
    ss = sigma_set(d, nu)
    m = np.full((d + 1, d + 1), ss.sigma3)
    m[0, :] = ss.sigma1
    m[:, 0] = ss.sigma1
    np.fill_diagonal(m, ss.sigma2)
    m[0, 0] = ss.sigma0
    return m / ss.c_d


def word_presence_probability(d: int, p: int) -> float:
    """Probability that p given distinct words all survive one perturbation:
    (d - p) / ((p + 1) d)."""
    if d < 1:
        raise ValueError("d must be at least 1")
    if not 0 <= p <= d:
        raise ValueError("order p must lie in 0..d")
    return (d - p) / ((p + 1) * d)


def beta_indicator_product(
    indices: Iterable[int], d: int, nu: float
) -> TheoryExplanation:
    """Exact population explanation of coefficient * prod_{j in J} 1{w_j in x}
    with unit coefficient, for a document with d distinct words.

    Only |J| and membership matter: all indexed words share one value, all
    others share another. J = empty set yields the constant model
    (intercept 1, all coefficients 0); |J| = 1 yields exactly 1 for the
    indexed word and 0 elsewhere, at every bandwidth.
    """
    member = frozenset(int(i) for i in indices)
    if any(i < 0 or i >= d for i in member):
        raise ValueError("indicator indices must lie in 0..d-1")
    p = len(member)
    ss = sigma_set(d, nu)
    a_p = alpha(p, d, nu)
    a_p1 = alpha(p + 1, d, nu) if p < d else 0.0
    c = ss.c_d
    intercept = (ss.sigma0 * a_p + p * ss.sigma1 * a_p + (d - p) * ss.sigma1 * a_p1) / c
    coef_in = (
        ss.sigma1 * a_p
        + ss.sigma2 * a_p
        + (d - p) * ss.sigma3 * a_p1
        + (p - 1) * ss.sigma3 * a_p
    ) / c
    coef_out = (
        ss.sigma1 * a_p
        + ss.sigma2 * a_p1
        + (d - p - 1) * ss.sigma3 * a_p1
        + p * ss.sigma3 * a_p
    ) / c
    coefficients = tuple(coef_in if j in member else coef_out for j in range(d))
    return TheoryExplanation(
        intercept=intercept,
        coefficients=coefficients,
        provenance=EXACT_CLOSED_FORM,
    )


def beta_tree(tree, local: LocalDictionary, nu: float) -> TheoryExplanation:
    """Exact population explanation of a tree: signed sum over its indicator
    terms (the explanation map is linear in the model).

    Terms naming a word outside the local dictionary vanish on every
    perturbed sample and contribute nothing.
    """
    d = local.d
    if d < 2:
        raise ClosedFormDomainError(
            "out of closed-form domain: need at least 2 distinct words"
        )
    intercept = 0.0
    coefficients = np.zeros(d)
    for term in tree.terms:
        if not all(w in local for w in term.words):
            continue
        part = beta_indicator_product(
            (local.index_of(w) for w in term.words), d, nu
        )
        intercept += term.coefficient * part.intercept
        coefficients += term.coefficient * part.coefficient_array()
    return TheoryExplanation(
        intercept=intercept,
        coefficients=tuple(float(c) for c in coefficients),
        provenance=EXACT_CLOSED_FORM,
        words=local.words,
    )


@dataclass(frozen=True)
class OmegaWeights:
    """Normalized squared TF-IDF mass of each distinct word of a document.

    The mass removed together with a word subset drives how the embedding
    of the survivor is rescaled.
    """

    words: tuple[str, ...]
    values: tuple[float, ...]

    @property
    def d(self) -> int:
        return len(self.values)

    def array(self) -> np.ndarray:
        return np.array(self.values)


def omega_weights(document: Document, idf: IdfTable) -> OmegaWeights:
    """Per-word share of the squared TF-IDF mass; positive, sums to 1."""
    if not document.tokens:
        raise ValueError("cannot compute mass weights of an empty document")
    local = local_dictionary(document)
    squared = tfidf_weights(local, idf) ** 2
    total = squared.sum()
    return OmegaWeights(
        words=local.words, values=tuple(float(v) for v in squared / total)
    )


def _kept_pair(kept) -> tuple[int, int | None]:
    if isinstance(kept, (int, np.integer)):
        return int(kept), None
    pair = tuple(int(i) for i in kept)
    if len(pair) == 1:
        return pair[0], None
    if len(pair) != 2 or pair[0] == pair[1]:
        raise ValueError("kept must be one index or a pair of distinct indices")
    return pair[0], pair[1]


def expected_removed_mass(omega: OmegaWeights, kept) -> float:
    """Exact expectation of the removed mass given that the kept word (or
    pair of words) survives.

    Single survivor j:   (1 - w_j) (d + 1) / (3 (d - 1)).
    Surviving pair j, k: (1 - w_j - w_k) (d + 1) / (4 (d - 2)).
    """
    j, k = _kept_pair(kept)
    d = omega.d
    for idx in (j,) if k is None else (j, k):
        if not 0 <= idx < d:
            raise ValueError("kept index out of range")
    if k is None:
        if d < 2:
            raise ValueError("single-survivor expectation requires d >= 2")
        return (1.0 - omega.values[j]) * (d + 1) / (3.0 * (d - 1))
    if d < 3:
        raise ValueError("degenerate (d - 2 = 0): pair expectation requires d >= 3")
    return (1.0 - omega.values[j] - omega.values[k]) * (d + 1) / (4.0 * (d - 2))


def _conditional_size_pmf(d: int, pair: bool) -> np.ndarray:
    """Distribution of the deletion count given one (or two) fixed survivors.

    Index s runs 0..d; entry 0 is zero since at least one word is removed.
    """
    pmf = np.zeros(d + 1)
    s = np.arange(1, d + 1, dtype=float)
    if pair:
        pmf[1:] = 3.0 * (d - s) * (d - s - 1) / (d * (d - 1) * (d - 2))
    else:
        pmf[1:] = 2.0 * (d - s) / (d * (d - 1))
    return np.clip(pmf, 0.0, None)


def _subset_sums(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Masses and cardinalities of all 2^m subsets of the given entries."""
    sums = np.zeros(1)
    sizes = np.zeros(1, dtype=np.int64)
    for v in values:
        sums = np.concatenate([sums, sums + v])
        sizes = np.concatenate([sizes, sizes + 1])
    return sums, sizes


@dataclass(frozen=True)
class RenormEstimate:
    """Conditional expectation of the survivor renormalization factor
    (1 - removed mass)^(-1/2), with a standard error when Monte Carlo."""

    value: float
    method: str
    stderr: float | None = None


def e_term(
    omega: OmegaWeights,
    j: int,
    k: int | None = None,
    *,
    method: str = "exact",
    n_mc: int = 200_000,
    seed=0,
) -> RenormEstimate:
    """Expected renormalization factor given that word j (and word k, when
    given) survives the deletion.

    method="exact" enumerates every subset of the remaining words (only
    allowed for d <= 20); "approx" swaps the expectation inside, returning
    (1 - expected removed mass)^(-1/2), a deliberate underestimate;
    "mc" samples the conditional law directly and reports a standard error.
    """
    d = omega.d
    jj, kk = _kept_pair(j if k is None else (j, k))
    pair = kk is not None
    if pair and d < 3:
        raise ValueError("degenerate (d - 2 = 0): pair expectation requires d >= 3")
    if not pair and d < 2:
        raise ValueError("single-survivor expectation requires d >= 2")

    if method == "approx":
        expected = expected_removed_mass(omega, jj if not pair else (jj, kk))
        return RenormEstimate(value=1.0 / math.sqrt(1.0 - expected), method=method)

    rest = np.array(
        [w for i, w in enumerate(omega.values) if i not in (jj, kk)], dtype=float
    )
    pmf = _conditional_size_pmf(d, pair)

    if method == "exact":
        if d > ENUMERATION_LIMIT:
            raise ValueError(
                f"enumeration too large (d = {d} > {ENUMERATION_LIMIT}); "
                "use method='approx' or method='mc'"
            )
        sums, sizes = _subset_sums(rest)
        m = len(rest)
        weight_by_size = np.zeros(m + 1)
        for s in range(1, m + 1):
            weight_by_size[s] = pmf[s] / math.comb(m, s)
        value = float(np.sum(weight_by_size[sizes] / np.sqrt(1.0 - sums)))
        return RenormEstimate(value=value, method=method)

    if method == "mc":
        rng = np.random.default_rng(seed)
        m = len(rest)
        sizes = rng.choice(d + 1, size=n_mc, p=pmf / pmf.sum())
        ranks = rng.random((n_mc, m)).argsort(axis=1).argsort(axis=1)
        removed_mass = ((ranks < sizes[:, None]) * rest).sum(axis=1)
        draws = 1.0 / np.sqrt(1.0 - removed_mass)
        value = float(draws.mean())
        stderr = float(draws.std(ddof=1) / math.sqrt(n_mc))
        return RenormEstimate(value=value, method=method, stderr=stderr)

    raise ValueError(f"unknown method {method!r}; expected exact, approx or mc")


# Large-bandwidth constants of the simplified linear-model prediction,
# kept as the expressions they come from: with the removed mass replaced
# by its limiting conditional means 1/3 (one survivor) and 1/4 (a pair),
# the renormalization factors become (1 - 1/3)^(-1/2) and (1 - 1/4)^(-1/2).
SIMPLIFIED_E_SINGLE = 1.0 / math.sqrt(1.0 - 1.0 / 3.0)
SIMPLIFIED_E_PAIR = 1.0 / math.sqrt(1.0 - 1.0 / 4.0)
SIMPLIFIED_LINEAR_CONSTANT = 3.0 * SIMPLIFIED_E_SINGLE - 2.0 * SIMPLIFIED_E_PAIR
SIMPLIFIED_LINEAR_CONSTANT_ROUNDED = 1.36
SIMPLIFIED_LINEAR_INTERCEPT_CONSTANT = 2.0 * SIMPLIFIED_E_SINGLE - 2.0 * SIMPLIFIED_E_PAIR


def _sigma_inverse_limit_ratios(d: int) -> tuple[float, float, float, float]:
    """Large-bandwidth limits of sigma_i / c_d, exact in d."""
    r0 = 2.0 * (2 * d - 1) / (d + 1)
    r1 = -6.0 / (d + 1)
    r2 = 6.0 * (d * d - 2 * d + 3) / ((d + 1) * (d - 1))
    r3 = -6.0 * (d - 3) / ((d + 1) * (d - 1))
    return r0, r1, r2, r3


def beta_linear(
    coefficients,
    document: Document,
    idf: IdfTable,
    *,
    mode: str = "simplified",
    e_method: str | None = None,
    n_mc: int = 200_000,
    seed=0,
) -> TheoryExplanation:
    """Large-bandwidth population explanation of a linear model.

    `coefficients` maps words to their linear weights (a LinearModel is
    accepted too). Words outside the document contribute nothing.

    mode="simplified" applies the flat constant: coefficient j becomes
    (3 E - 2 E') * lambda_j * phi_j with E, E' the limiting
    renormalization factors above (about 1.36). mode="full" keeps the
    per-word conditional renormalization expectations, computed by
    `e_term` with the chosen method, and evaluates the exact
    infinite-bandwidth product of inverse covariance and expected
    responses, including the intercept.
    """
    lam_map = getattr(coefficients, "coefficients", coefficients)
    if not document.tokens:
        raise ValueError("cannot explain an empty document")
    local = local_dictionary(document)
    d = local.d
    if d < 3:
        raise ClosedFormDomainError(
            "out of closed-form domain: linear predictions require d >= 3"
        )
    weights = tfidf_weights(local, idf)
    phi = weights / math.sqrt(float(weights @ weights))
    lam = np.zeros(d)
    for w, c in lam_map.items():
        if w in local:
            lam[local.index_of(w)] = float(c)
    signal = lam * phi

    if mode == "simplified":
        coeffs = SIMPLIFIED_LINEAR_CONSTANT * signal
        intercept = SIMPLIFIED_LINEAR_INTERCEPT_CONSTANT * float(signal.sum())
        return TheoryExplanation(
            intercept=intercept,
            coefficients=tuple(float(c) for c in coeffs),
            provenance=LARGE_BANDWIDTH,
            words=local.words,
            notes={
                "mode": "simplified",
                "constant": SIMPLIFIED_LINEAR_CONSTANT,
                "constant_rounded": SIMPLIFIED_LINEAR_CONSTANT_ROUNDED,
                "constant_terms": (
                    3.0,
                    SIMPLIFIED_E_SINGLE,
                    -2.0,
                    SIMPLIFIED_E_PAIR,
                ),
            },
        )
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}; expected 'simplified' or 'full'")

    if e_method is None:
        e_method = "exact" if d <= ENUMERATION_LIMIT else "approx"
    omega = omega_weights(document, idf)
    rng = np.random.default_rng(seed)

    def term(j: int, k: int | None) -> float:
        term_seed = rng.integers(0, 2**63 - 1) if e_method == "mc" else 0
        return e_term(
            omega, j, k, method=e_method, n_mc=n_mc, seed=term_seed
        ).value

    e_single = np.array([term(j, None) for j in range(d)])
    e_pair = np.zeros((d, d))
    for j in range(d):
        for k in range(j + 1, d):
            value = term(j, k)
            e_pair[j, k] = value
            e_pair[k, j] = value

    # Expected responses in the infinite-bandwidth limit. Source word j
    # contributes to coordinate 0 and j through its single-survivor factor
    # and to every other coordinate through the pair factor (the e_pair
    # diagonal is zero, so the matrix product skips j = k).
    single_factor = (d - 1) / (2.0 * d)
    pair_factor = (d - 2) / (3.0 * d)
    gamma0 = float(np.sum(signal * single_factor * e_single))
    gamma = pair_factor * (e_pair @ signal) + single_factor * e_single * signal

    r0, r1, r2, r3 = _sigma_inverse_limit_ratios(d)
    gamma_sum = float(gamma.sum())
    intercept = r0 * gamma0 + r1 * gamma_sum
    coeffs = r1 * gamma0 + r2 * gamma + r3 * (gamma_sum - gamma)
    return TheoryExplanation(
        intercept=float(intercept),
        coefficients=tuple(float(c) for c in coeffs),
        provenance=LARGE_BANDWIDTH,
        words=local.words,
        notes={"mode": "full", "e_method": e_method},
    )


def _mc_chunks(n_total: int, chunk: int = 65_536):
    done = 0
    while done < n_total:
        size = min(chunk, n_total - done)
        yield size
        done += size


def beta_general_mc(
    model: Model,
    document: Document,
    idf: IdfTable,
    *,
    nu: float = 0.25,
    n_mc: int = 200_000,
    seed=0,
) -> TheoryExplanation:
    """Monte Carlo estimate of the population explanation of any bounded
    model, with per-coordinate standard errors.

    Estimates the expected weighted responses by sampling and combines
    them with the exact closed-form inverse covariance. This is the
    universal oracle: it works for every model in scope, at any bandwidth.
    """
    if not document.tokens:
        raise ValueError("cannot explain an empty document")
    if n_mc < 2:
        raise ValueError("need at least two Monte Carlo samples")
    local = local_dictionary(document)
    d = local.d
    ss = sigma_set(d, nu)
    w_vec = tfidf_weights(local, idf)
    sq = w_vec**2

    rng = np.random.default_rng(seed)
    total = np.zeros(d + 1)
    total_sq = np.zeros(d + 1)
    for size in _mc_chunks(n_mc):
        sizes, z = draw_feature_matrix(rng, size, d)
        kernel = psi(sizes / d, nu)
        masses = z * w_vec
        norms = np.sqrt((z * sq).sum(axis=1))
        values = np.zeros_like(masses, dtype=float)
        np.divide(masses, norms[:, None], out=values, where=norms[:, None] > 0)
        responses = model.evaluate_matrix(values, local.words)

        t = kernel * responses
        q = z * t[:, None]
        q_sum = q.sum(axis=1)
        contrib = np.empty((size, d + 1))
        contrib[:, 0] = (ss.sigma0 * t + ss.sigma1 * q_sum) / ss.c_d
        contrib[:, 1:] = (
            ss.sigma1 * t[:, None]
            + (ss.sigma2 - ss.sigma3) * q
            + ss.sigma3 * q_sum[:, None]
        ) / ss.c_d
        total += contrib.sum(axis=0)
        total_sq += (contrib**2).sum(axis=0)

    mean = total / n_mc
    variance = np.maximum(total_sq / n_mc - mean**2, 0.0) * n_mc / (n_mc - 1)
    stderr = np.sqrt(variance / n_mc)
    return TheoryExplanation(
        intercept=float(mean[0]),
        coefficients=tuple(float(v) for v in mean[1:]),
        provenance=MONTE_CARLO,
        words=local.words,
        coefficient_stderr=tuple(float(v) for v in stderr[1:]),
        intercept_stderr=float(stderr[0]),
        notes={"nu": nu, "n_mc": n_mc},
    )


def beta_large_bandwidth(
    model: Model,
    document: Document,
    idf: IdfTable,
    *,
    n_mc: int = 200_000,
    seed=0,
) -> TheoryExplanation:
    """Large-bandwidth approximation of the population explanation, via
    Monte Carlo conditional means.

    Coefficient j is 3 E[f | word j survives] minus 3/d times the sum of
    the other conditional means; the intercept is twice the unconditional
    mean minus the same average. Standard errors are approximate: they
    keep only the leading conditional-mean term.
    """
    if not document.tokens:
        raise ValueError("cannot explain an empty document")
    if n_mc < 2:
        raise ValueError("need at least two Monte Carlo samples")
    local = local_dictionary(document)
    d = local.d
    w_vec = tfidf_weights(local, idf)
    sq = w_vec**2

    rng = np.random.default_rng(seed)
    count = 0
    sum_f = 0.0
    sum_f_sq = 0.0
    cond_count = np.zeros(d)
    cond_sum = np.zeros(d)
    cond_sum_sq = np.zeros(d)
    for size in _mc_chunks(n_mc):
        _, z = draw_feature_matrix(rng, size, d)
        masses = z * w_vec
        norms = np.sqrt((z * sq).sum(axis=1))
        values = np.zeros_like(masses, dtype=float)
        np.divide(masses, norms[:, None], out=values, where=norms[:, None] > 0)
        responses = model.evaluate_matrix(values, local.words)
        count += size
        sum_f += float(responses.sum())
        sum_f_sq += float((responses**2).sum())
        cond_count += z.sum(axis=0)
        cond_sum += responses @ z
        cond_sum_sq += (responses**2) @ z

    if np.any(cond_count < 2):
        raise ValueError("not enough conditional samples; increase n_mc")
    mean_f = sum_f / count
    cond_mean = cond_sum / cond_count
    cond_var = np.maximum(
        cond_sum_sq / cond_count - cond_mean**2, 0.0
    ) * cond_count / (cond_count - 1)
    cond_se = np.sqrt(cond_var / cond_count)
    avg_term = cond_mean.sum() / d

    coeffs = 3.0 * cond_mean - 3.0 * avg_term
    intercept = 2.0 * mean_f - 3.0 * avg_term
    var_f = max(sum_f_sq / count - mean_f**2, 0.0) * count / (count - 1)
    return TheoryExplanation(
        intercept=float(intercept),
        coefficients=tuple(float(v) for v in coeffs),
        provenance=LARGE_BANDWIDTH,
        words=local.words,
        coefficient_stderr=tuple(float(v) for v in 3.0 * cond_se),
        intercept_stderr=float(2.0 * math.sqrt(var_f / count)),
        notes={"n_mc": n_mc, "stderr": "leading-term approximation"},
    )


def _exp_or_inf(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def sample_size_bound(
    bound_m: float, d: int, nu: float, epsilon: float, eta: float
) -> float:
    """Sample count guaranteeing concentration of the fitted coefficients
    within epsilon with probability 1 - eta, from the explicit constants.

    A diagnostic only: the constants are loose enough that the value is
    astronomically large for realistic inputs (and infinite where the
    exponentials overflow).
    """
    if bound_m <= 0:
        raise ValueError("model bound must be positive")
    if not 0 < epsilon < bound_m:
        raise ValueError("epsilon must lie in (0, bound_m)")
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    if d < 1:
        raise ValueError("d must be at least 1")
    if nu <= 0:
        raise ValueError("bandwidth nu must be positive")
    first = 2**9 * 70**4 * bound_m**2 * d**9 * _exp_or_inf(10.0 / nu**2)
    second = 2**9 * 70**2 * bound_m * d**5 * _exp_or_inf(5.0 / nu**2)
    return max(first, second) * math.log(8.0 * d / eta) / epsilon**2

"""
======================
   Gaussian Mixture Prior
======================

Analytic Gaussian-mixture prior ``p(x_0)``. Diffusing a mixture keeps it a mixture
(weights unchanged, means ``sqrt(alpha_bar) mu_k``, covariances
``alpha_bar Sigma_k + (1 - alpha_bar) I``), so the prior score, its Hessian, the
likelihood ``p(y | x_t)`` and the posterior ``p(x_0 | y)`` are all available in
closed form. These serve as the oracles every approximate method is checked
against.

Every covariance is held through its spectral decomposition ``U diag(lambda) U^T``,
computed once. Diffused covariances share the eigenvectors, so every inverse and
log-determinant is a division and a sum over eigenvalues. Diagonal covariances
skip the decomposition.

Functions accept a single :class:`~saiplab.numerics.Signal` or a block of chains
as an array of shape ``(B, N)``.
"""

import threading
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from saiplab.constants.data_values import LOG_RESPONSIBILITY_FLOOR
from saiplab.diffusion import NoiseSchedule
from saiplab.exceptions import ContractViolation, Degenerate, NotPositiveDefinite
from saiplab.numerics import DenseMatrix, Rng, Signal, as_array, cholesky
from saiplab.operators import MeasurementModel, dense_materialize

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class CovarianceSpectrum:
    """``U diag(eigenvalues) U^T``; ``eigenvectors`` is None for diagonal covariances."""

    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray] = None

    @classmethod
    def from_covariance(cls, covariance: Union[DenseMatrix, np.ndarray]) -> "CovarianceSpectrum":
        data = covariance.data if isinstance(covariance, DenseMatrix) else np.asarray(covariance)
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 1:
            if np.any(data <= 0) or not np.all(np.isfinite(data)):
                raise NotPositiveDefinite("Diagonal covariance entries must be positive.")
            return cls(data.copy())
        cholesky(DenseMatrix(data))
        if np.count_nonzero(data - np.diag(np.diag(data))) == 0:
            return cls(np.diag(data).copy())
        eigenvalues, eigenvectors = scipy.linalg.eigh(data)
        return cls(np.clip(eigenvalues, 0.0, None), eigenvectors)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def is_diagonal(self) -> bool:
        return self.eigenvectors is None

    def apply(self, x: np.ndarray, values: np.ndarray) -> np.ndarray:
        """Computes ``U diag(values) U^T x`` along the last axis of ``x``."""
        if self.is_diagonal:
            return x * values
        return ((x @ self.eigenvectors) * values) @ self.eigenvectors.T

    def matrix(self, values: Optional[np.ndarray] = None) -> np.ndarray:
        values = self.eigenvalues if values is None else values
        if self.is_diagonal:
            return np.diag(values)
        return (self.eigenvectors * values) @ self.eigenvectors.T

    def sqrt_apply(self, z: np.ndarray) -> np.ndarray:
        root = np.sqrt(self.eigenvalues)
        if self.is_diagonal:
            return z * root
        return (z * root) @ self.eigenvectors.T


@dataclass(frozen=True, eq=False)
class GmmPrior:
    """
    Mixture ``sum_k pi_k N(mu_k, Sigma_k)``.

    ``covs`` holds one covariance per component, either a (N, N) matrix or a
    length-N vector of variances for diagonal covariances.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: Sequence
    spectra: Tuple[CovarianceSpectrum, ...] = field(init=False, repr=False)

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64).reshape(-1)
        means = np.atleast_2d(np.array([as_array(m) for m in self.means], dtype=np.float64))
        if weights.size == 0:
            raise ContractViolation("A mixture needs at least one component.")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ContractViolation(
                f"Mixture weights must be nonnegative and sum to 1. Provided {weights}."
            )
        if means.shape[0] != weights.size or len(self.covs) != weights.size:
            raise ContractViolation(
                f"Expected {weights.size} means and covariances, got {means.shape[0]} "
                f"and {len(self.covs)}."
            )
        spectra = tuple(CovarianceSpectrum.from_covariance(c) for c in self.covs)
        for spectrum in spectra:
            if spectrum.dim != means.shape[1]:
                raise ContractViolation(
                    f"Covariance of dimension {spectrum.dim} does not match means of "
                    f"dimension {means.shape[1]}."
                )
        weights.setflags(write=False)
        means.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "spectra", spectra)

    @classmethod
    def isotropic(cls, weights, means, variances: Sequence[float]) -> "GmmPrior":
        means = np.atleast_2d(np.asarray(means, dtype=np.float64))
        return cls(
            weights, means, [np.full(means.shape[1], float(v)) for v in variances]
        )

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def covariance(self, k: int) -> DenseMatrix:
        return DenseMatrix(self.spectra[k].matrix())

    def to_dict(self) -> Dict:
        result = {"weights": self.weights.tolist(), "means": self.means.tolist()}
        if all(s.is_diagonal for s in self.spectra):
            result["variances"] = [s.eigenvalues.tolist() for s in self.spectra]
        else:
            result["covariances"] = [s.matrix().tolist() for s in self.spectra]
        return result


def load_gmm(spec: Dict) -> GmmPrior:
    """
    Builds a prior from a config mapping with ``weights``, ``means`` and either
    ``covariances`` (nested N x N lists) or ``variances`` (per-component diagonals).
    """
    if spec.get("covariances") is not None:
        covs = [np.asarray(c, dtype=np.float64) for c in spec["covariances"]]
    elif spec.get("variances") is not None:
        covs = [np.asarray(v, dtype=np.float64).reshape(-1) for v in spec["variances"]]
    else:
        raise ContractViolation("A GMM spec needs either 'covariances' or 'variances'.")
    return GmmPrior(spec["weights"], spec["means"], covs)


class MixtureTerms(NamedTuple):
    """Per-evaluation quantities shared by the score, Hessian and posterior mean."""

    responsibilities: np.ndarray  # (B, K)
    log_responsibilities: np.ndarray  # (B, K)
    component_scores: np.ndarray  # (K, B, N)
    score: np.ndarray  # (B, N)
    log_density: np.ndarray  # (B,)


@dataclass(frozen=True, eq=False)
class DiffusedGmm:
    """Marginal ``p(x_t)`` of the prior at a fixed ``alpha_bar``."""

    prior: GmmPrior
    alpha_bar: float

    def __post_init__(self):
        if not 0 < self.alpha_bar <= 1:
            raise ContractViolation(f"alpha_bar must lie in (0, 1]. Provided {self.alpha_bar}.")

    @property
    def scale(self) -> float:
        return float(np.sqrt(self.alpha_bar))

    @property
    def weights(self) -> np.ndarray:
        return self.prior.weights

    @property
    def means(self) -> np.ndarray:
        return self.scale * self.prior.means

    def variances(self, k: int) -> np.ndarray:
        """Eigenvalues of ``alpha_bar Sigma_k + (1 - alpha_bar) I``."""
        return self.alpha_bar * self.prior.spectra[k].eigenvalues + (1.0 - self.alpha_bar)

    def covs(self) -> List[DenseMatrix]:
        return [
            DenseMatrix(spectrum.matrix(self.variances(k)))
            for k, spectrum in enumerate(self.prior.spectra)
        ]

    def conditional_covariance_values(self, k: int) -> np.ndarray:
        """Eigenvalues of ``Var_k(x_0 | x_t) = Sigma_k - alpha_bar Sigma_k C_k^-1 Sigma_k``."""
        eigenvalues = self.prior.spectra[k].eigenvalues
        return eigenvalues * (1.0 - self.alpha_bar) / self.variances(k)

    def conditional_covariance(self, k: int) -> DenseMatrix:
        return DenseMatrix(self.prior.spectra[k].matrix(self.conditional_covariance_values(k)))

    def evaluate(self, x: np.ndarray) -> MixtureTerms:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[-1] != self.prior.dim:
            raise ContractViolation(
                f"x_t of length {x.shape[-1]} does not match the prior dimension {self.prior.dim}."
            )
        n_components = self.prior.n_components
        log_components = np.empty((x.shape[0], n_components))
        component_scores = np.empty((n_components,) + x.shape)
        with np.errstate(divide="ignore"):
            log_weights = np.log(self.prior.weights)
        for k, spectrum in enumerate(self.prior.spectra):
            variances = self.variances(k)
            centered = x - self.scale * self.prior.means[k]
            projected = centered if spectrum.is_diagonal else centered @ spectrum.eigenvectors
            mahalanobis = np.sum(projected**2 / variances, axis=-1)
            log_det = np.sum(np.log(variances))
            log_components[:, k] = log_weights[k] - 0.5 * (
                mahalanobis + log_det + self.prior.dim * LOG_2PI
            )
            component_scores[k] = -spectrum.apply(centered, 1.0 / variances)
        log_density = logsumexp(log_components, axis=1)
        log_responsibilities = np.maximum(
            log_components - log_density[:, None], LOG_RESPONSIBILITY_FLOOR
        )
        responsibilities = np.exp(log_responsibilities)
        responsibilities[:, np.isneginf(log_weights)] = 0.0
        score = np.einsum("bk,kbn->bn", responsibilities, component_scores)
        return MixtureTerms(
            responsibilities, log_components - log_density[:, None], component_scores, score, log_density
        )

    def hessian_vector_product(self, terms: MixtureTerms, v: np.ndarray) -> np.ndarray:
        """
        ``H v`` for ``H = -sum_k g_k C_k^-1 + sum_k g_k s_k s_k^T - s s^T`` where
        ``g_k`` are responsibilities, ``s_k`` component scores and ``s`` the score.
        """
        v = np.atleast_2d(np.asarray(v, dtype=np.float64))
        result = np.zeros_like(v)
        for k, spectrum in enumerate(self.prior.spectra):
            weight = terms.responsibilities[:, k][:, None]
            component_score = terms.component_scores[k]
            projection = np.einsum("bn,bn->b", component_score, v)[:, None]
            result += weight * (
                -spectrum.apply(v, 1.0 / self.variances(k)) + component_score * projection
            )
        score_projection = np.einsum("bn,bn->b", terms.score, v)[:, None]
        return result - terms.score * score_projection

    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Dense Hessian of ``log p(x_t)`` at a single point."""
        x = np.asarray(x, dtype=np.float64).reshape(1, -1)
        terms = self.evaluate(x)
        result = -terms.score[0][:, None] * terms.score[0][None, :]
        for k, spectrum in enumerate(self.prior.spectra):
            weight = terms.responsibilities[0, k]
            component_score = terms.component_scores[k, 0]
            result += weight * (
                -spectrum.matrix(1.0 / self.variances(k))
                + np.outer(component_score, component_score)
            )
        return 0.5 * (result + result.T)

    def component_posterior_means(self, x: np.ndarray) -> np.ndarray:
        """``E_k[x_0 | x_t] = mu_k + sqrt(alpha_bar) Sigma_k C_k^-1 (x_t - sqrt(alpha_bar) mu_k)``, shape (K, B, N)."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        result = np.empty((self.prior.n_components,) + x.shape)
        for k, spectrum in enumerate(self.prior.spectra):
            gain = self.scale * spectrum.eigenvalues / self.variances(k)
            result[k] = self.prior.means[k] + spectrum.apply(
                x - self.scale * self.prior.means[k], gain
            )
        return result

    def posterior_mean(self, x: np.ndarray, terms: Optional[MixtureTerms] = None) -> np.ndarray:
        terms = self.evaluate(x) if terms is None else terms
        return np.einsum("bk,kbn->bn", terms.responsibilities, self.component_posterior_means(x))


def _alpha_bar(sched: NoiseSchedule, t: int) -> float:
    # t = 0 is the clean signal
    return 1.0 if t == 0 else sched.alpha_bar_at(t)


def diffuse(prior: GmmPrior, sched: NoiseSchedule, t: int) -> DiffusedGmm:
    return DiffusedGmm(prior, _alpha_bar(sched, t))


def _result(x_t: Union[Signal, np.ndarray], values: np.ndarray) -> Union[Signal, np.ndarray]:
    if isinstance(x_t, Signal):
        return Signal(values[0], shape=x_t.shape)
    return values if np.ndim(x_t) > 1 else values[0]


def prior_score(
    prior: GmmPrior, sched: NoiseSchedule, x_t: Union[Signal, np.ndarray], t: int
) -> Union[Signal, np.ndarray]:
    """Exact ``grad log p(x_t)`` of the diffused mixture."""
    return _result(x_t, diffuse(prior, sched, t).evaluate(as_array(x_t)).score)


def log_density(
    prior: GmmPrior, sched: NoiseSchedule, x_t: Union[Signal, np.ndarray], t: int
) -> Union[float, np.ndarray]:
    values = diffuse(prior, sched, t).evaluate(as_array(x_t)).log_density
    return float(values[0]) if np.ndim(as_array(x_t)) == 1 else values


def prior_hessian(
    prior: GmmPrior, sched: NoiseSchedule, x_t: Union[Signal, np.ndarray], t: int
) -> DenseMatrix:
    return DenseMatrix(diffuse(prior, sched, t).hessian(as_array(x_t)))


def prior_hessian_vector_product(
    prior: GmmPrior,
    sched: NoiseSchedule,
    x_t: Union[Signal, np.ndarray],
    t: int,
    v: Union[Signal, np.ndarray],
) -> Union[Signal, np.ndarray]:
    diffused = diffuse(prior, sched, t)
    x = as_array(x_t)
    terms = diffused.evaluate(x)
    return _result(x_t, diffused.hessian_vector_product(terms, as_array(v)))


def posterior_mean(
    prior: GmmPrior, sched: NoiseSchedule, x_t: Union[Signal, np.ndarray], t: int
) -> Union[Signal, np.ndarray]:
    """``E[x_0 | x_t]`` from the per-component conditional means and responsibilities."""
    return _result(x_t, diffuse(prior, sched, t).posterior_mean(as_array(x_t)))


class LikelihoodOracle:
    """
    Exact ``p(y | x_t)`` for a mixture prior and a linear Gaussian measurement.
    Each component contributes ``N(y; A E_k[x_0|x_t], A V_k A^T + sigma^2 I)``.

    Cholesky factors of the per-component measurement covariances are cached per
    ``(k, alpha_bar)``; the cache is shared by all chains and guarded by a lock.
    """

    def __init__(self, prior: GmmPrior, model: MeasurementModel):
        if model.operator.in_dim != prior.dim:
            raise ContractViolation(
                f"Operator input dimension {model.operator.in_dim} does not match the "
                f"prior dimension {prior.dim}."
            )
        self.prior = prior
        self.model = model
        self.matrix = dense_materialize(model.operator).data
        self._factors: Dict[Tuple[int, float], Tuple] = {}
        self._lock = threading.Lock()

    def _factor(self, diffused: DiffusedGmm, k: int) -> Tuple:
        key = (k, diffused.alpha_bar)
        with self._lock:
            cached = self._factors.get(key)
        if cached is not None:
            return cached
        spectrum = self.prior.spectra[k]
        values = diffused.conditional_covariance_values(k)
        if spectrum.is_diagonal:
            projected = self.matrix * np.sqrt(values)
        else:
            projected = (self.matrix @ spectrum.eigenvectors) * np.sqrt(values)
        covariance = projected @ projected.T + self.model.noise_var * np.eye(self.matrix.shape[0])
        try:
            factor = scipy.linalg.cho_factor(covariance, lower=True)
        except np.linalg.LinAlgError:
            raise Degenerate(
                "Measurement covariance A V_k A^T + sigma^2 I is singular "
                f"(component {k}, sigma={self.model.noise_std})."
            ) from None
        log_det = 2.0 * np.sum(np.log(np.diag(factor[0])))
        with self._lock:
            self._factors[key] = (factor, log_det)
        return factor, log_det

    def _terms(self, diffused: DiffusedGmm, y: np.ndarray, x: np.ndarray):
        x = np.atleast_2d(x)
        terms = diffused.evaluate(x)
        conditional_means = diffused.component_posterior_means(x)
        n_components = self.prior.n_components
        log_joint = np.empty((x.shape[0], n_components))
        whitened = []
        for k in range(n_components):
            (factor, log_det) = self._factor(diffused, k)
            residual = y - conditional_means[k] @ self.matrix.T
            solved = scipy.linalg.cho_solve(factor, residual.T).T
            whitened.append(solved)
            log_joint[:, k] = terms.log_responsibilities[:, k] - 0.5 * (
                np.einsum("bm,bm->b", residual, solved)
                + log_det
                + self.matrix.shape[0] * LOG_2PI
            )
        return terms, log_joint, whitened

    def log_likelihood(self, diffused: DiffusedGmm, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        _, log_joint, _ = self._terms(diffused, y, x)
        return logsumexp(log_joint, axis=1)

    def score(self, diffused: DiffusedGmm, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        """
        ``sum_k w_k [s_k - s + sqrt(alpha_bar) Sigma_k C_k^-1 A^T S_k^-1 (y - A m_k)]``
        with ``w_k`` the likelihood-weighted responsibilities.
        """
        terms, log_joint, whitened = self._terms(diffused, y, x)
        log_weights = log_joint - logsumexp(log_joint, axis=1)[:, None]
        weights = np.exp(np.maximum(log_weights, LOG_RESPONSIBILITY_FLOOR))
        result = np.zeros_like(terms.score)
        for k, spectrum in enumerate(self.prior.spectra):
            gain = diffused.scale * spectrum.eigenvalues / diffused.variances(k)
            data_term = spectrum.apply(whitened[k] @ self.matrix, gain)
            result += weights[:, k][:, None] * (
                terms.component_scores[k] - terms.score + data_term
            )
        return result


def exact_likelihood_score(
    prior: GmmPrior,
    sched: NoiseSchedule,
    model: MeasurementModel,
    y: Union[Signal, np.ndarray],
    x_t: Union[Signal, np.ndarray],
    t: int,
    oracle: Optional[LikelihoodOracle] = None,
) -> Union[Signal, np.ndarray]:
    """
    Exact ``grad log p(y | x_t)``. Pass a shared ``oracle`` to reuse its cached
    factorizations across calls.

    :raises Degenerate: when ``sigma = 0`` and ``A V_k A^T`` is singular
    """
    oracle = LikelihoodOracle(prior, model) if oracle is None else oracle
    values = oracle.score(diffuse(prior, sched, t), as_array(y), as_array(x_t))
    return _result(x_t, values)


def log_likelihood(
    prior: GmmPrior,
    sched: NoiseSchedule,
    model: MeasurementModel,
    y: Union[Signal, np.ndarray],
    x_t: Union[Signal, np.ndarray],
    t: int,
    oracle: Optional[LikelihoodOracle] = None,
) -> Union[float, np.ndarray]:
    """``log p(y | x_t)``."""
    oracle = LikelihoodOracle(prior, model) if oracle is None else oracle
    values = oracle.log_likelihood(diffuse(prior, sched, t), as_array(y), as_array(x_t))
    return float(values[0]) if np.ndim(as_array(x_t)) == 1 else values


def exact_posterior_score(
    prior: GmmPrior,
    sched: NoiseSchedule,
    model: MeasurementModel,
    y: Union[Signal, np.ndarray],
    x_t: Union[Signal, np.ndarray],
    t: int,
    oracle: Optional[LikelihoodOracle] = None,
) -> Union[Signal, np.ndarray]:
    """``grad log p(x_t | y)``, the sum of the exact prior and likelihood scores."""
    score = as_array(prior_score(prior, sched, as_array(x_t), t))
    likelihood = as_array(exact_likelihood_score(prior, sched, model, y, as_array(x_t), t, oracle))
    return _result(x_t, np.atleast_2d(score + likelihood))


def exact_posterior(prior: GmmPrior, model: MeasurementModel, y: Union[Signal, np.ndarray]) -> GmmPrior:
    """
    ``p(x | y)`` as a mixture: each component gets the conjugate linear-Gaussian
    update and is reweighted by its evidence ``N(y; A mu_k, A Sigma_k A^T + sigma^2 I)``.
    """
    if model.noise_std <= 0:
        raise ContractViolation("The exact posterior requires a positive noise_std.")
    matrix = dense_materialize(model.operator).data
    y = as_array(y)
    n_obs = matrix.shape[0]
    log_evidence = np.empty(prior.n_components)
    means, covs = [], []
    for k, spectrum in enumerate(prior.spectra):
        covariance = spectrum.matrix()
        cross = covariance @ matrix.T
        evidence_covariance = matrix @ cross + model.noise_var * np.eye(n_obs)
        factor = scipy.linalg.cho_factor(evidence_covariance, lower=True)
        residual = y - matrix @ prior.means[k]
        gain = scipy.linalg.cho_solve(factor, cross.T).T
        means.append(prior.means[k] + gain @ residual)
        posterior_covariance = covariance - gain @ cross.T
        covs.append(0.5 * (posterior_covariance + posterior_covariance.T))
        log_det = 2.0 * np.sum(np.log(np.diag(factor[0])))
        log_evidence[k] = -0.5 * (
            residual @ scipy.linalg.cho_solve(factor, residual) + log_det + n_obs * LOG_2PI
        )
    with np.errstate(divide="ignore"):
        log_weights = np.log(prior.weights) + log_evidence
    weights = np.exp(log_weights - logsumexp(log_weights))
    weights = weights / weights.sum()
    return GmmPrior(weights, np.array(means), covs)


def gmm_sample_array(prior: GmmPrior, rng: Rng, n: int) -> np.ndarray:
    """``n`` mixture draws as an ``(n, N)`` array."""
    if n < 1:
        raise ContractViolation(f"n must be at least 1. Provided {n}.")
    labels = rng.generator.choice(prior.n_components, size=n, p=prior.weights)
    noise = rng.standard_normal((n, prior.dim))
    samples = np.empty((n, prior.dim))
    for k, spectrum in enumerate(prior.spectra):
        rows = labels == k
        samples[rows] = prior.means[k] + spectrum.sqrt_apply(noise[rows])
    return samples


def gmm_sample(prior: GmmPrior, rng: Rng, n: int) -> List[Signal]:
    """i.i.d. mixture draws, one :class:`Signal` each."""
    return [Signal(row) for row in gmm_sample_array(prior, rng, n)]

"""Two-state HMM over labeling-function votes, trained with EM.

States are O (index 0) and CUE (index 1). Each labeling function j is an
independent emission stream with firing probability theta[j][s] per state;
fractional votes enter the expected counts as soft Bernoulli outcomes and
abstentions contribute likelihood 1 in both states. Initialization counts
hard state sequences obtained by binarizing the all-function average at
0.5, with Laplace smoothing alpha=1; the same smoothing is applied in
every M-step, so the tracked objective (data pseudo-log-likelihood plus
the smoothing penalty) is non-decreasing across iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .labeling import SilverLabels, VoteMatrix, aggregate_simple

O, CUE = 0, 1
N_STATES = 2
PARAM_FLOOR = 1e-4


@dataclass
class HmmParams:
    initial: np.ndarray  # (2,)
    transition: np.ndarray  # (2, 2), row-stochastic
    emission: np.ndarray  # (J, 2): theta[j][s]
    function_ids: list[str]
    warning: str | None = None
    loglik_trace: list[float] = field(default_factory=list)

    def validate(self) -> None:
        if abs(self.initial.sum() - 1.0) > 1e-9:
            raise ValidationError("initial distribution does not sum to 1")
        if np.abs(self.transition.sum(axis=1) - 1.0).max() > 1e-9:
            raise ValidationError("transition rows do not sum to 1")
        if self.emission.min() < PARAM_FLOOR - 1e-15 or self.emission.max() > 1 - PARAM_FLOOR + 1e-15:
            raise ValidationError("emission parameters outside the clamp floor")

    def to_doc(self) -> dict:
        return {
            "format_version": "1",
            "states": ["O", "CUE"],
            "initial": [float(x) for x in self.initial],
            "transition": [[float(x) for x in row] for row in self.transition],
            "emission": [[float(x) for x in row] for row in self.emission],
            "function_ids": list(self.function_ids),
            "warning": self.warning,
            "loglik_trace": [float(x) for x in self.loglik_trace],
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "HmmParams":
        return cls(
            initial=np.array(doc["initial"], dtype=float),
            transition=np.array(doc["transition"], dtype=float),
            emission=np.array(doc["emission"], dtype=float),
            function_ids=[str(x) for x in doc["function_ids"]],
            warning=doc.get("warning"),
            loglik_trace=[float(x) for x in doc.get("loglik_trace", [])],
        )


def _log_emissions(params_emission: np.ndarray, votes: np.ndarray) -> np.ndarray:
    """(T, 2) per-token log emission likelihood; abstains contribute 0."""
    J, T = votes.shape
    observed = ~np.isnan(votes)
    v = np.nan_to_num(votes, nan=0.0)
    log_theta = np.log(params_emission)  # (J, 2)
    log_one_minus = np.log1p(-params_emission)
    out = np.zeros((T, N_STATES))
    for s in range(N_STATES):
        contrib = v * log_theta[:, s][:, None] + (1.0 - v) * log_one_minus[:, s][:, None]
        out[:, s] = np.where(observed, contrib, 0.0).sum(axis=0)
    return out


def _logsumexp2(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = a.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def _forward_backward(params: HmmParams, votes: np.ndarray):
    """Returns (gamma (T,2), xi_sum (2,2), logZ)."""
    T = votes.shape[1]
    logB = _log_emissions(params.emission, votes)
    log_pi = np.log(params.initial)
    logA = np.log(params.transition)

    la = np.empty((T, N_STATES))
    la[0] = log_pi + logB[0]
    for t in range(1, T):
        la[t] = _logsumexp2(la[t - 1][:, None] + logA, axis=0) + logB[t]
    logZ = float(_logsumexp2(la[T - 1], axis=0))

    lb = np.zeros((T, N_STATES))
    for t in range(T - 2, -1, -1):
        lb[t] = _logsumexp2(logA + (logB[t + 1] + lb[t + 1])[None, :], axis=1)

    gamma = np.exp(la + lb - logZ)
    xi_sum = np.zeros((N_STATES, N_STATES))
    for t in range(T - 1):
        xi = np.exp(la[t][:, None] + logA + (logB[t + 1] + lb[t + 1])[None, :] - logZ)
        xi_sum += xi
    return gamma, xi_sum, logZ


def _smooth(counts: np.ndarray, alpha: float) -> np.ndarray:
    sm = counts + alpha
    return sm / sm.sum(axis=-1, keepdims=True)


def _estimate(
    init_counts: np.ndarray,
    trans_counts: np.ndarray,
    emis_num: np.ndarray,
    emis_den: np.ndarray,
    function_ids: list[str],
    alpha: float,
) -> HmmParams:
    initial = _smooth(init_counts, alpha)
    transition = _smooth(trans_counts, alpha)
    emission = (emis_num + alpha) / (emis_den + 2 * alpha)
    emission = np.clip(emission, PARAM_FLOOR, 1 - PARAM_FLOOR)
    return HmmParams(initial=initial, transition=transition, emission=emission, function_ids=function_ids)


def _smoothing_penalty(params: HmmParams, alpha: float) -> float:
    return float(
        alpha * np.log(params.initial).sum()
        + alpha * np.log(params.transition).sum()
        + alpha * (np.log(params.emission) + np.log1p(-params.emission)).sum()
    )


def _initial_counts(matrices: Sequence[VoteMatrix], function_ids: list[str], alpha: float) -> HmmParams:
    J = len(function_ids)
    init_counts = np.zeros(N_STATES)
    trans_counts = np.zeros((N_STATES, N_STATES))
    emis_num = np.zeros((J, N_STATES))
    emis_den = np.zeros((J, N_STATES))
    for matrix in matrices:
        avg = np.asarray(aggregate_simple(matrix, "average_all").probs)
        states = (avg > 0.5).astype(int)
        init_counts[states[0]] += 1
        for t in range(len(states) - 1):
            trans_counts[states[t], states[t + 1]] += 1
        observed = ~np.isnan(matrix.votes)
        v = np.nan_to_num(matrix.votes, nan=0.0)
        for s in range(N_STATES):
            mask = (states == s)[None, :] & observed
            emis_num[:, s] += np.where(mask, v, 0.0).sum(axis=1)
            emis_den[:, s] += mask.sum(axis=1)
    return _estimate(init_counts, trans_counts, emis_num, emis_den, function_ids, alpha)


def hmm_fit(matrices: Sequence[VoteMatrix], iterations: int = 4, *, alpha: float = 1.0) -> HmmParams:
    """Count-based initialization followed by exactly `iterations` EM rounds."""
    matrices = [m for m in matrices if m.T > 0]
    if not matrices:
        raise ValidationError("hmm_fit needs at least one non-empty vote matrix")
    function_ids = matrices[0].function_ids
    for m in matrices:
        if m.function_ids != function_ids:
            raise ValidationError(f"{m.answer_id}: inconsistent labeling-function registry")

    params = _initial_counts(matrices, function_ids, alpha)
    if all(np.isnan(m.votes).all() for m in matrices):
        params.warning = "all labeling functions abstained; returning initialization"
        return params

    J = len(function_ids)
    trace: list[float] = []
    for _ in range(iterations):
        init_counts = np.zeros(N_STATES)
        trans_counts = np.zeros((N_STATES, N_STATES))
        emis_num = np.zeros((J, N_STATES))
        emis_den = np.zeros((J, N_STATES))
        total_logZ = 0.0
        for matrix in matrices:
            gamma, xi_sum, logZ = _forward_backward(params, matrix.votes)
            total_logZ += logZ
            init_counts += gamma[0]
            trans_counts += xi_sum
            observed = ~np.isnan(matrix.votes)
            v = np.nan_to_num(matrix.votes, nan=0.0)
            for s in range(N_STATES):
                weights = gamma[:, s][None, :] * observed
                emis_num[:, s] += (weights * v).sum(axis=1)
                emis_den[:, s] += weights.sum(axis=1)
        trace.append(total_logZ + _smoothing_penalty(params, alpha))
        params = _estimate(init_counts, trans_counts, emis_num, emis_den, function_ids, alpha)

    final_logZ = sum(_forward_backward(params, m.votes)[2] for m in matrices)
    trace.append(final_logZ + _smoothing_penalty(params, alpha))
    params.loglik_trace = trace
    params.validate()
    return params


def hmm_posterior(params: HmmParams, matrix: VoteMatrix) -> SilverLabels:
    """Posterior marginal P(CUE | tokens) from forward-backward in log space."""
    if matrix.J != params.emission.shape[0]:
        raise ValidationError(
            f"{matrix.answer_id}: matrix has {matrix.J} functions, params expect {params.emission.shape[0]}"
        )
    if matrix.T == 0:
        return SilverLabels(answer_id=matrix.answer_id, probs=[])
    gamma, _, _ = _forward_backward(params, matrix.votes)
    probs = np.clip(gamma[:, CUE], 0.0, 1.0)
    return SilverLabels(answer_id=matrix.answer_id, probs=[float(p) for p in probs])

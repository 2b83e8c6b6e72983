"""Gaussian mixture fitting by EM, and cluster-count selection by WSS and silhouette.

The mixture density is sum_j P(j) N(x; c_j, S_j) with full covariances.
The E-step computes responsibilities p(j|x_n) in log space; the M-step
re-estimates centers as responsibility-weighted means, covariances as
weighted outer-product averages about the new centers, and proportions
as average responsibilities. Each covariance gets a ridge of
reg_epsilon * (trace/d) * I so the Cholesky factorization stays valid in
high dimension with few points.

Initialization is k-means (greedy farthest-point seeding) on the same
data; the best of ``n_restarts`` runs by final log-likelihood wins. The
number of clusters is chosen as the silhouette-width argmax over a k
range, with the WSS curve reported alongside so the elbow can be checked
by eye, matching the dual-check protocol this pipeline follows.

Cluster labels are 1-based everywhere in the public API.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyCluster,
    EmptyComponent,
    InvalidParam,
    SingleCluster,
    SingularCovariance,
    TooFewPoints,
)
from .features import as_values
from .seeds import derive_seed

DEFAULT_N_RESTARTS = 5
DEFAULT_MAX_ITER = 500
DEFAULT_REL_TOL = 1e-8
DEFAULT_REG_EPSILON = 1e-6
_EMPTY_MASS = 1e-10

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GmmModel:
    """A fitted mixture: proportions, centers, covariances, and fit diagnostics."""

    weights: np.ndarray
    centers: np.ndarray
    covariances: np.ndarray
    log_likelihood_trace: tuple[float, ...]
    converged: bool
    n_iter: int
    reg_epsilon: float

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=float)
        c = np.asarray(self.centers, dtype=float)
        s = np.asarray(self.covariances, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "covariances", s)
        object.__setattr__(self, "log_likelihood_trace", tuple(float(v) for v in self.log_likelihood_trace))
        if w.ndim != 1 or c.ndim != 2 or s.ndim != 3:
            raise InvalidParam("weights (k,), centers (k,d), covariances (k,d,d) required")
        k, d = c.shape
        if w.shape != (k,) or s.shape != (k, d, d):
            raise InvalidParam("mixture parameter shapes are inconsistent")
        if (w < 0).any() or abs(float(w.sum()) - 1.0) > 1e-12:
            raise InvalidParam("mixture proportions must be non-negative and sum to one")
        if np.abs(s - s.transpose(0, 2, 1)).max() > 1e-12:
            raise InvalidParam("covariances must be symmetric")
        for j in range(k):
            if float(np.linalg.eigvalsh(s[j])[0]) <= 0.0:
                raise SingularCovariance(f"component {j + 1} covariance is not positive definite")

    @property
    def k(self) -> int:
        return int(self.weights.size)

    @property
    def d(self) -> int:
        return int(self.centers.shape[1])


def _chol(cov: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky factor and log-determinant; raises on non-SPD input."""
    try:
        lower = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    return lower, 2.0 * float(np.sum(np.log(np.diag(lower))))


def _log_density_matrix(x: np.ndarray, centers: np.ndarray, covariances: np.ndarray) -> np.ndarray:
    """log N(x_n; c_j, S_j) for every row and component, shape (n, k)."""
    n, d = x.shape
    k = centers.shape[0]
    out = np.empty((n, k))
    for j in range(k):
        lower, logdet = _chol(covariances[j])
        diff = x - centers[j]
        # Solve L z = diff^T; the Mahalanobis term is the squared column norm.
        z = np.linalg.solve(lower, diff.T)
        maha = np.sum(z * z, axis=0)
        out[:, j] = -0.5 * (d * _LOG_2PI + logdet + maha)
    return out


def component_density(x, center, covariance) -> float:
    """Gaussian density N(x; center, covariance), via Cholesky in log space."""
    xv = np.atleast_2d(np.asarray(x, dtype=float))
    c = np.atleast_2d(np.asarray(center, dtype=float))
    s = np.asarray(covariance, dtype=float)
    if s.ndim == 0:
        s = s.reshape(1, 1)
    log_d = _log_density_matrix(xv, c, s[np.newaxis, :, :])
    return float(np.exp(log_d[0, 0]))


def _model_params(model: GmmModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return model.weights, model.centers, model.covariances


def mixture_density(model: GmmModel, x) -> float:
    """p(x) = sum_j P(j) p(x|j)."""
    xv = np.atleast_2d(np.asarray(x, dtype=float))
    log_d = _log_density_matrix(xv, model.centers, model.covariances)
    return float(np.exp(log_d[0]) @ model.weights)


def _log_mixture_rows(x: np.ndarray, weights, centers, covariances) -> np.ndarray:
    """log p(x_n) per row via log-sum-exp over components."""
    log_d = _log_density_matrix(x, centers, covariances) + np.log(weights)
    peak = log_d.max(axis=1, keepdims=True)
    return (peak + np.log(np.exp(log_d - peak).sum(axis=1, keepdims=True))).ravel()


def log_likelihood(model: GmmModel, data) -> float:
    """Total log-likelihood of the rows of ``data`` under the model."""
    x = as_values(data)
    return float(np.sum(_log_mixture_rows(x, *_model_params(model))))


def _e_step(x: np.ndarray, weights, centers, covariances) -> np.ndarray:
    log_d = _log_density_matrix(x, centers, covariances) + np.log(weights)
    peak = log_d.max(axis=1, keepdims=True)
    resp = np.exp(log_d - peak)
    resp /= resp.sum(axis=1, keepdims=True)
    return resp


def e_step(model: GmmModel, data) -> np.ndarray:
    """Responsibilities p(j|x_n), one row per data row, rows summing to one."""
    return _e_step(as_values(data), *_model_params(model))


def m_step(data, resp: np.ndarray, reg_epsilon: float = DEFAULT_REG_EPSILON):
    """Re-estimated (weights, centers, covariances) from responsibilities.

    Covariances are taken about the new centers and ridged with
    reg_epsilon * (trace/d) * I (scale falls back to 1 when the raw
    covariance is all-zero, e.g. for duplicated points).
    """
    x = as_values(data)
    r = np.asarray(resp, dtype=float)
    if r.ndim != 2 or r.shape[0] != x.shape[0]:
        raise InvalidParam("responsibilities must be (n, k) aligned with the data")
    n, d = x.shape
    k = r.shape[1]
    mass = r.sum(axis=0)
    for j in range(k):
        if mass[j] < _EMPTY_MASS:
            raise EmptyComponent(f"component {j + 1} has responsibility mass {mass[j]:.3e}")
    weights = mass / mass.sum()
    centers = (r.T @ x) / mass[:, None]
    covariances = np.empty((k, d, d))
    for j in range(k):
        diff = x - centers[j]
        weighted = diff * r[:, j : j + 1]
        cov = (weighted.T @ diff) / mass[j]
        cov = 0.5 * (cov + cov.T)
        scale = float(np.trace(cov)) / d
        if scale <= 0.0:
            scale = 1.0
        covariances[j] = cov + reg_epsilon * scale * np.eye(d)
    return weights, centers, covariances


def _reseed_empty(
    x: np.ndarray, resp: np.ndarray, weights, centers, covariances
) -> np.ndarray:
    """Give every starved component full responsibility for the lowest-density point."""
    resp = resp.copy()
    mass = resp.sum(axis=0)
    empty = np.flatnonzero(mass < _EMPTY_MASS)
    if empty.size == 0:
        return resp
    order = np.argsort(_log_mixture_rows(x, weights, centers, covariances), kind="stable")
    for rank, j in enumerate(empty):
        point = order[min(rank, x.shape[0] - 1)]
        resp[point, :] = 0.0
        resp[point, j] = 1.0
    return resp


def kmeans(data, k: int, max_iter: int = 100, seed: int = 0):
    """Lloyd k-means with greedy farthest-point-style seeding.

    Returns (labels, centers) with labels in 1..k. The first seed point is
    uniform from the rng; each further seed is drawn with probability
    proportional to its squared distance from the chosen set (the
    kmeans++ rule), which keeps seeds spread out while still varying
    across seeds so EM restarts explore different basins. Deterministic
    given the seed. Empty clusters are re-seeded at the point farthest
    from their center.
    """
    x = as_values(data)
    n = x.shape[0]
    if k < 1:
        raise InvalidParam("k must be at least 1")
    if n < k:
        raise TooFewPoints(f"{n} points cannot form {k} clusters")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, x.shape[1]))
    centers[0] = x[int(rng.integers(n))]
    min_d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(min_d2.sum())
        if total > 0.0:
            pick = int(rng.choice(n, p=min_d2 / total))
        else:
            pick = int(np.argmax(min_d2))
        centers[j] = x[pick]
        min_d2 = np.minimum(min_d2, np.sum((x - centers[j]) ** 2, axis=1))

    labels = np.full(n, -1)
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(d2, axis=1)
        for _rescue in range(k):
            counts = np.bincount(new_labels, minlength=k)
            empty = np.flatnonzero(counts == 0)
            if empty.size == 0:
                break
            j = int(empty[0])
            far = int(np.argmax(np.sum((x - centers[j]) ** 2, axis=1)))
            centers[j] = x[far]
            d2[:, j] = np.sum((x - centers[j]) ** 2, axis=1)
            new_labels = np.argmin(d2, axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = x[labels == j]
            if members.size:
                centers[j] = members.mean(axis=0)
    return labels + 1, centers


def em_fit(
    data,
    k: int,
    n_restarts: int = DEFAULT_N_RESTARTS,
    max_iter: int = DEFAULT_MAX_ITER,
    rel_tol: float = DEFAULT_REL_TOL,
    reg_epsilon: float = DEFAULT_REG_EPSILON,
    seed: int = 0,
) -> GmmModel:
    """Fit a k-component mixture by EM; best of ``n_restarts`` k-means starts wins.

    Iterates until the relative log-likelihood improvement drops below
    ``rel_tol`` or ``max_iter`` update rounds, recording the likelihood
    trace at every round. Deterministic given the seed.
    """
    x = as_values(data)
    n = x.shape[0]
    if k < 1:
        raise InvalidParam("k must be at least 1")
    if n < k:
        raise TooFewPoints(f"{n} points cannot support {k} components")
    if n_restarts < 1 or max_iter < 1:
        raise InvalidParam("n_restarts and max_iter must be at least 1")

    best: GmmModel | None = None
    for restart in range(n_restarts):
        labels, _ = kmeans(x, k, seed=derive_seed(seed, f"em-restart:{restart}"))
        resp = np.zeros((n, k))
        resp[np.arange(n), labels - 1] = 1.0
        weights, centers, covariances = m_step(x, resp, reg_epsilon)

        trace: list[float] = []
        converged = False
        while True:
            ll = float(np.sum(_log_mixture_rows(x, weights, centers, covariances)))
            trace.append(ll)
            if len(trace) > 1:
                prev = trace[-2]
                if ll - prev <= rel_tol * abs(prev):
                    converged = True
                    break
            if len(trace) > max_iter:
                break
            resp = _e_step(x, weights, centers, covariances)
            resp = _reseed_empty(x, resp, weights, centers, covariances)
            weights, centers, covariances = m_step(x, resp, reg_epsilon)

        model = GmmModel(
            weights=weights,
            centers=centers,
            covariances=covariances,
            log_likelihood_trace=tuple(trace),
            converged=converged,
            n_iter=len(trace) - 1,
            reg_epsilon=reg_epsilon,
        )
        if best is None or model.log_likelihood_trace[-1] > best.log_likelihood_trace[-1]:
            best = model
    assert best is not None
    return best


def hard_assign(model: GmmModel, data) -> np.ndarray:
    """Most-responsible component per row, labels in 1..k; ties go to the lower label."""
    resp = e_step(model, data)
    return np.argmax(resp, axis=1) + 1


def _check_labels(labels) -> tuple[np.ndarray, int]:
    lab = np.asarray(labels, dtype=np.int64)
    if lab.ndim != 1 or lab.size == 0:
        raise InvalidParam("labels must be a non-empty 1-D sequence")
    k = int(lab.max())
    if lab.min() < 1:
        raise InvalidParam("cluster labels must be in 1..k")
    counts = np.bincount(lab, minlength=k + 1)[1:]
    if (counts == 0).any():
        missing = int(np.flatnonzero(counts == 0)[0]) + 1
        raise EmptyCluster(f"cluster {missing} has no members")
    return lab, k


def wss(data, labels) -> float:
    """Within-cluster sum of squared Euclidean distances to cluster means."""
    x = as_values(data)
    lab, k = _check_labels(labels)
    if lab.size != x.shape[0]:
        raise InvalidParam("labels must align with the data rows")
    total = 0.0
    for j in range(1, k + 1):
        members = x[lab == j]
        center = members.mean(axis=0)
        total += float(np.sum((members - center) ** 2))
    return total


def silhouette(data, labels) -> tuple[np.ndarray, float]:
    """Classic silhouette widths (Euclidean) and their mean.

    a(i) is the mean distance to the point's own cluster (excluding
    itself), b(i) the smallest mean distance to another cluster;
    s(i) = (b-a)/max(a,b), with s = 0 for singleton clusters and for the
    degenerate all-zero-distance case.
    """
    x = as_values(data)
    lab, k = _check_labels(labels)
    if lab.size != x.shape[0]:
        raise InvalidParam("labels must align with the data rows")
    if k < 2:
        raise SingleCluster("silhouette needs at least two clusters")
    n = x.shape[0]
    dist = np.empty((n, n))
    for i in range(n):
        dist[i] = np.sqrt(((x - x[i]) ** 2).sum(axis=1))
    masks = [lab == j for j in range(1, k + 1)]
    scores = np.zeros(n)
    for i in range(n):
        own = int(lab[i]) - 1
        own_mask = masks[own].copy()
        own_mask[i] = False
        own_count = int(own_mask.sum())
        if own_count == 0:
            scores[i] = 0.0
            continue
        a = float(np.mean(dist[i][own_mask]))
        b = min(float(np.mean(dist[i][masks[j]])) for j in range(k) if j != own)
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return scores, float(scores.mean())


@dataclass(frozen=True)
class SelectionRow:
    k: int
    wss: float
    mean_silhouette: float


@dataclass(frozen=True)
class ClusterSelectionReport:
    """WSS and silhouette per candidate k, plus the chosen k and the rule that chose it."""

    rows: tuple[SelectionRow, ...]
    chosen_k: int
    rule_used: str
    failures: tuple[tuple[int, str], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "failures", tuple(self.failures))
        if self.chosen_k not in {row.k for row in self.rows}:
            raise InvalidParam("chosen_k must be one of the candidate rows")


def select_k(
    data,
    k_min: int = 2,
    k_max: int = 10,
    n_restarts: int = DEFAULT_N_RESTARTS,
    max_iter: int = DEFAULT_MAX_ITER,
    rel_tol: float = DEFAULT_REL_TOL,
    reg_epsilon: float = DEFAULT_REG_EPSILON,
    seed: int = 0,
    override_k: int | None = None,
) -> tuple[GmmModel, ClusterSelectionReport]:
    """Fit every k in [k_min, k_max] and choose by mean silhouette (ties -> smaller k).

    The WSS curve is reported for all candidates so the elbow can be
    confirmed by a human. A failed fit is recorded in ``failures`` and
    skipped. ``override_k`` forces the choice (rule ``user-override``).
    """
    x = as_values(data)
    n = x.shape[0]
    if not 2 <= k_min <= k_max:
        raise InvalidParam("need 2 <= k_min <= k_max")
    if k_max > n:
        raise TooFewPoints(f"k_max={k_max} exceeds the {n} data rows")
    if override_k is not None and not k_min <= override_k <= k_max:
        raise InvalidParam("override_k must lie within [k_min, k_max]")

    rows: list[SelectionRow] = []
    failures: list[tuple[int, str]] = []
    models: dict[int, GmmModel] = {}
    for k in range(k_min, k_max + 1):
        try:
            model = em_fit(
                x,
                k,
                n_restarts=n_restarts,
                max_iter=max_iter,
                rel_tol=rel_tol,
                reg_epsilon=reg_epsilon,
                seed=derive_seed(seed, f"select-k:{k}"),
            )
            labels = hard_assign(model, x)
            # A component can win no rows; score the induced partition by
            # compacting labels so wss/silhouette see contiguous clusters.
            distinct = np.unique(labels)
            compact = np.searchsorted(distinct, labels) + 1
            _, mean_sil = silhouette(x, compact)
            rows.append(SelectionRow(k=k, wss=wss(x, compact), mean_silhouette=mean_sil))
            models[k] = model
        except Exception as exc:  # recorded, never silently dropped
            failures.append((k, f"{type(exc).__name__}: {exc}"))
    if not rows:
        raise TooFewPoints("every candidate k failed to fit")

    if override_k is not None:
        if override_k not in models:
            raise InvalidParam(f"override_k={override_k} failed to fit")
        chosen, rule = override_k, "user-override"
    else:
        best = max(rows, key=lambda row: (row.mean_silhouette, -row.k))
        chosen, rule = best.k, "silhouette-max"
    report = ClusterSelectionReport(
        rows=tuple(rows), chosen_k=chosen, rule_used=rule, failures=tuple(failures)
    )
    return models[chosen], report

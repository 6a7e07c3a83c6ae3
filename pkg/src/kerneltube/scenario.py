"""Sample-size certificates for convex scenario programs.

For a convex scenario program with decision dimension ``dim`` and a
unique optimizer, the probability that the optimized solution violates a
fresh constraint with probability more than ``eps`` is at most the
binomial tail

    B(N, k, eps) = sum_{i=0}^{k} C(N, i) eps^i (1 - eps)^(N - i),

with k = dim - 1.  ``min_samples_bisect`` inverts this bound exactly;
``min_samples_bound`` is the closed-form (more conservative) alternative
N >= (2 / eps) (k + ln(1 / beta)).
"""

import math
import warnings
from dataclasses import dataclass

from .validation import check_in_open_unit


def binomial_tail(N, k, eps):
    """Lower binomial tail sum_{i=0}^{k} C(N, i) eps^i (1-eps)^(N-i).

    Computed through the log-space term recursion
    term_{i+1} / term_i = (N - i) / (i + 1) * eps / (1 - eps)
    and an exactly-summed series relative to the largest term, so the
    result carries full double precision even for N ~ 1e6, k ~ 1e3.
    """
    N = int(N)
    k = int(k)
    if N < 0 or k < 0 or k > N:
        raise ValueError(f"need 0 <= k <= N, got N={N}, k={k}")
    check_in_open_unit(eps, "eps")
    log_ratio_base = math.log(eps) - math.log1p(-eps)
    log_terms = []
    lt = N * math.log1p(-eps)  # log term_0
    log_terms.append(lt)
    for i in range(k):
        lt += math.log(N - i) - math.log(i + 1) + log_ratio_base
        log_terms.append(lt)
    lmax = max(log_terms)
    if lmax == -math.inf:
        return 0.0
    total = math.fsum(math.exp(lt - lmax) for lt in log_terms)
    return min(1.0, math.exp(lmax) * total)


def min_samples_bound(eps, beta, n):
    """Closed-form sample bound ceil((2 / eps) * (n + ln(1 / beta)))."""
    check_in_open_unit(eps, "eps")
    if not (0.0 < beta <= 1.0):
        raise ValueError(f"beta must lie in (0, 1], got {beta}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    return int(math.ceil((2.0 / eps) * (n + math.log(1.0 / beta))))


def min_samples_bisect(eps, beta, decision_dim):
    """Smallest N with binomial_tail(N, decision_dim - 1, eps) <= beta.

    Brackets with the closed-form bound (doubled until the tail condition
    holds) and bisects; the returned N is verified minimal: N passes and
    N - 1 fails.
    """
    check_in_open_unit(eps, "eps")
    check_in_open_unit(beta, "beta")
    if decision_dim < 1:
        raise ValueError(f"decision_dim must be >= 1, got {decision_dim}")
    k = decision_dim - 1
    lo = decision_dim  # tail(k, k, eps) = 1 > beta, so N must exceed k
    hi = max(lo + 1, min_samples_bound(eps, beta, k))
    while binomial_tail(hi, k, eps) > beta:
        hi *= 2
    while lo < hi:
        mid = (lo + hi) // 2
        if binomial_tail(mid, k, eps) <= beta:
            hi = mid
        else:
            lo = mid + 1
    N = lo
    assert binomial_tail(N, k, eps) <= beta
    assert N == k + 1 or binomial_tail(N - 1, k, eps) > beta
    return N


@dataclass(frozen=True)
class ScenarioCertificate:
    """Violation certificate of one solved scenario program.

    With ``num_scenarios`` i.i.d. samples and ``decision_dim`` scalar
    decision variables, the solution's violation probability exceeds
    ``epsilon`` with probability at most ``tail_value``; the certificate
    is valid when that tail is at most ``beta``.
    """

    epsilon: float
    beta: float
    decision_dim: int
    num_scenarios: int
    tail_value: float

    @classmethod
    def compute(cls, eps, beta, decision_dim, num_scenarios):
        tail = binomial_tail(num_scenarios, decision_dim - 1, eps)
        return cls(
            epsilon=eps,
            beta=beta,
            decision_dim=decision_dim,
            num_scenarios=num_scenarios,
            tail_value=tail,
        )

    @property
    def valid(self):
        return self.tail_value <= self.beta

    def to_dict(self):
        return {
            "epsilon": self.epsilon,
            "beta": self.beta,
            "decision_dim": self.decision_dim,
            "num_scenarios": self.num_scenarios,
            "tail_value": self.tail_value,
            "valid": self.valid,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            epsilon=data["epsilon"],
            beta=data["beta"],
            decision_dim=data["decision_dim"],
            num_scenarios=data["num_scenarios"],
            tail_value=data["tail_value"],
        )


def union_bound(certs):
    """Combine per-program certificates: risks and confidences add.

    Returns (eps_total, beta_total).  Warns when eps_total exceeds 1,
    in which case the joint certificate is vacuous.
    """
    certs = list(certs)
    if not certs:
        raise ValueError("certs must be non-empty")
    eps_total = math.fsum(c.epsilon for c in certs)
    beta_total = math.fsum(c.beta for c in certs)
    if eps_total > 1.0:
        warnings.warn(
            f"joint violation risk {eps_total:g} exceeds 1; certificate is vacuous",
            stacklevel=2,
        )
    return eps_total, beta_total

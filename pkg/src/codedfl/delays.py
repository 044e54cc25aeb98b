"""Per-node compute and communication delay model.

A node's round-trip time for one training round is the sum of a
deterministic compute term (load / processing rate), an exponential
memory-access term, and geometrically distributed retransmission counts
for the model download and the gradient upload.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NodeProfile",
    "DelaySample",
    "sample_delay",
    "mean_delay",
    "cdf_delay",
]

# Retransmission-count tail mass below which remaining terms cannot change
# a double-precision CDF value.
_TAIL_EPS = 1e-18


@dataclass(frozen=True)
class NodeProfile:
    """Stochastic compute/communication parameters of one node.

    mu: data points processed per second.
    alpha: ratio of deterministic compute time to mean memory-access time.
    tau: seconds per packet transmission.
    p: per-transmission failure probability.
    ell_max: most data points the node can process per round (its local
        dataset size for a client, the redundancy cap for the server).
    ideal: node is always available, P(T <= t) = 1 for every t > 0.  Used
        for a server with dedicated compute; bypasses sampling entirely.
    """

    mu: float
    alpha: float
    tau: float
    p: float
    ell_max: float
    ideal: bool = False

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not 0.0 <= self.p < 1.0:
            raise ValueError(f"p must be in [0, 1), got {self.p}")
        if self.ell_max < 0:
            raise ValueError(f"ell_max must be >= 0, got {self.ell_max}")


@dataclass(frozen=True)
class DelaySample:
    """One sampled round trip.  For ideal nodes every field is zero."""

    t_compute_det: float
    t_compute_rand: float
    n_down: int
    n_up: int
    total: float


def _sample_geometric(p_fail: float, rng: np.random.Generator) -> int:
    # Inverse-CDF form, O(1) even when 1 - p_fail is tiny.
    if p_fail == 0.0:
        return 1
    u = rng.random()
    if u <= 0.0:
        u = 2.0**-53
    return max(1, math.ceil(math.log(u) / math.log(p_fail)))


def sample_delay(profile: NodeProfile, load: float, rng: np.random.Generator) -> DelaySample:
    """Draw one round-trip delay for ``load`` data points.

    The deterministic compute part is load/mu exactly, the random part is
    exponential with rate alpha*mu/load, and each link direction needs a
    Geometric(1 - p) number of transmissions.
    """
    if profile.ideal:
        return DelaySample(0.0, 0.0, 0, 0, 0.0)
    if not 0 < load <= profile.ell_max:
        raise ValueError(
            f"load must be in (0, {profile.ell_max}], got {load}"
        )
    t_det = load / profile.mu
    t_rand = rng.exponential(load / (profile.alpha * profile.mu))
    n_down = _sample_geometric(profile.p, rng)
    n_up = _sample_geometric(profile.p, rng)
    total = t_det + t_rand + profile.tau * (n_down + n_up)
    return DelaySample(t_det, t_rand, n_down, n_up, total)


def mean_delay(profile: NodeProfile, load: float) -> float:
    """Expected round-trip delay, (load/mu)(1 + 1/alpha) + 2 tau/(1 - p)."""
    if profile.ideal:
        return 0.0
    if load < 0:
        raise ValueError(f"load must be >= 0, got {load}")
    return (load / profile.mu) * (1.0 + 1.0 / profile.alpha) + 2.0 * profile.tau / (
        1.0 - profile.p
    )


def cdf_delay(profile: NodeProfile, load: float, t: float) -> float:
    """P(T <= t) for a node processing ``load`` data points.

    Sum over the total transmission count nu >= 2 of the negative-binomial
    weight (nu-1)(1-p)^2 p^(nu-2) times the exponential CDF evaluated on
    the slack t - load/mu - tau*nu, each term gated to zero when its slack
    is non-positive.  Terms vanish exactly beyond the largest nu with
    t - tau*nu > 0; the loop additionally stops once the remaining
    negative-binomial tail cannot affect a double.
    """
    if profile.ideal:
        return 1.0 if t > 0 else 0.0
    if load <= 0:
        raise ValueError(f"load must be positive, got {load}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    tau, p = profile.tau, profile.p
    if t <= 2.0 * tau:
        return 0.0
    nu_max = math.ceil(t / tau) - 1
    if nu_max < 2:
        return 0.0
    rate = profile.alpha * profile.mu / load
    shift = t - load / profile.mu
    base = (1.0 - p) ** 2
    power = 1.0  # running p^(nu-2)
    total = 0.0
    mass = 0.0
    for nu in range(2, nu_max + 1):
        pmf = (nu - 1) * base * power
        arg = shift - tau * nu
        if arg > 0.0:
            total += pmf * -math.expm1(-rate * arg)
        mass += pmf
        if 1.0 - mass < _TAIL_EPS:
            break
        power *= p
    return min(total, 1.0)

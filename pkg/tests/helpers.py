"""Shared test utilities: random profile factories and independent oracles."""

import numpy as np

from codedfl import NodeProfile


def random_profile(
    rng: np.random.Generator,
    p_max: float = 0.9,
    p_min: float = 0.0,
    ell_max_range: tuple[float, float] = (2.0, 30.0),
) -> NodeProfile:
    return NodeProfile(
        mu=rng.uniform(0.5, 4.0),
        alpha=rng.uniform(0.5, 10.0),
        tau=rng.uniform(0.4, 2.0),
        p=rng.uniform(p_min, p_max),
        ell_max=rng.uniform(*ell_max_range),
    )


def mc_delay_totals(
    profile: NodeProfile, load: float, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized Monte-Carlo round trips, independent of sample_delay."""
    t_det = load / profile.mu
    t_rand = rng.exponential(load / (profile.alpha * profile.mu), size=n)
    if profile.p == 0.0:
        n_tx = np.full(n, 2)
    else:
        n_tx = rng.geometric(1.0 - profile.p, size=n) + rng.geometric(
            1.0 - profile.p, size=n
        )
    return t_det + t_rand + profile.tau * n_tx


def nb_sum_cdf(profile: NodeProfile, load: float, t: float, n_terms: int = 4000) -> float:
    """Direct evaluation of the step-gated negative-binomial CDF sum."""
    if load <= 0 or t <= 2 * profile.tau:
        return 0.0
    nu_max = int(np.ceil(t / profile.tau)) - 1
    if nu_max < 2:
        return 0.0
    nus = np.arange(2, min(nu_max, n_terms) + 1, dtype=np.float64)
    h = (nus - 1) * (1 - profile.p) ** 2 * profile.p ** (nus - 2)
    arg = t - load / profile.mu - profile.tau * nus
    rate = profile.alpha * profile.mu / load
    terms = np.where(arg > 0, -np.expm1(-rate * np.maximum(arg, 0.0)), 0.0)
    return float(np.sum(h * terms))

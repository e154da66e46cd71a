"""Named desk-scale verification suites for the CLI.

Each suite re-checks one quantitative property of the pipeline on small
instances with fixed seeds and prints measured values next to their
thresholds. The pytest acceptance module runs the same checks at full
scale; these are the quick command-line variants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .adjacency import graph_report, mixing_time
from .bits import all_states, random_states, state_to_index
from .chain import (
    EmpiricalInitial,
    dense_rate_matrix,
    flip_probability,
    kl_to_uniform,
    marginal_at,
    transition_prob,
)
from .metrics import EmpiricalLaw, kl_exact, tv_plugin
from .quantizer import QuantizerSpec
from .sampler import SamplerConfig, beta_value, build_partition, exact_reverse_marginal, sample
from .scores import ExactScoreOracle, calibrate_noise_scale, score_entropy_loss


@dataclass(frozen=True)
class CheckRow:
    name: str
    passed: bool
    value: float
    n: int
    detail: str


def _random_initial(rng: np.random.Generator, D: int, support: int) -> EmpiricalInitial:
    states = np.unique(random_states(rng, support, D), axis=0)
    weights = rng.random(len(states)) + 0.1
    return EmpiricalInitial(states=states, weights=weights / weights.sum())


def suite_kernel(seed: int) -> list[CheckRow]:
    worst = 0.0
    combos = 0
    for D in range(1, 7):
        R = dense_rate_matrix(D)
        states = all_states(D)
        for dt in (0.01, 0.1, 1.0, 5.0):
            kernel = expm(dt * R)
            pf = flip_probability(dt)
            ham = np.bitwise_count(np.arange(1 << D)[:, None] ^ np.arange(1 << D)[None, :])
            closed = pf**ham * (1 - pf) ** (D - ham)
            worst = max(worst, float(np.abs(kernel - closed).max()))
            combos += 1
            # spot check the scalar entry point as well
            a, b = states[0], states[-1]
            closed_ab = transition_prob(D, 0.0, dt, a, b)
            worst = max(worst, abs(closed_ab - kernel[(1 << D) - 1, 0]))
    return [
        CheckRow(
            "closed_form_vs_expm",
            worst <= 1e-9,
            worst,
            combos,
            f"max |kernel - expm| = {worst:.3e} (tol 1e-9)",
        )
    ]


def suite_kl_decay(seed: int) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    n = 0
    for _ in range(20):
        D = int(rng.integers(2, 9))
        initial = _random_initial(rng, D, int(rng.integers(1, 9)))
        for t in (0.5, 1.0, 2.0, 4.0):
            kl = kl_to_uniform(marginal_at(initial, t))
            worst = max(worst, kl / (math.exp(-t) * D))
            n += 1
    return [
        CheckRow(
            "kl_within_exponential_envelope",
            worst <= 1.0,
            worst,
            n,
            f"max KL / (e^-t D) = {worst:.4f} (must be <= 1)",
        )
    ]


def suite_beta_bound(seed: int) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        D = int(rng.integers(2, 7))
        T = float(rng.uniform(1.0, 5.0))
        t = float(rng.uniform(0.0, T - 0.05))
        initial = _random_initial(rng, D, int(rng.integers(1, 7)))
        probs = marginal_at(initial, T - t)
        idx = np.arange(1 << D)
        total = sum(probs[idx ^ (1 << i)] / probs[idx] for i in range(D))
        tight = D * (1.0 + 1.0 / (T - t))
        cap = beta_value(D, T, t, "standard")
        worst = max(worst, float(total.max()) / min(tight, cap))
    spec = QuantizerSpec.from_grid(d=1, L=1.0, K=16)
    initial = _random_initial(rng, spec.n_bits, 6)
    config = SamplerConfig.default_schedule(spec, 0.1, seed)
    result = sample(config, ExactScoreOracle(initial, config.T), 2000)
    rows = [
        CheckRow(
            "total_rate_under_cap",
            worst <= 1.0,
            worst,
            10,
            f"max rate / bound = {worst:.4f} (must be <= 1)",
        ),
        CheckRow(
            "no_truncation_under_exact_score",
            result.stats.truncation_activations == 0,
            float(result.stats.truncation_activations),
            2000,
            f"{result.stats.truncation_activations} truncation activations (expect 0)",
        ),
    ]
    return rows


def suite_partition(seed: int) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    worst_plain = 0.0
    worst_corr = 0.0
    for _ in range(50):
        D = int(rng.integers(1, 13))
        T = float(rng.uniform(0.5, 6.0))
        delta = float(np.exp(rng.uniform(math.log(0.03), math.log(0.25)))) * min(1.0, T / 2)
        part = build_partition(D, T, delta)
        assert part.times[-1] == T - delta and (np.diff(part.times) > 0).all()
        worst_plain = max(worst_plain, part.expected_events() / part.event_budget())
        # the corrected budget must also cover fine stopping gaps
        fine = build_partition(D, T, delta * 1e-3)
        worst_corr = max(worst_corr, fine.expected_events() / fine.event_budget(corrected=True))
    return [
        CheckRow(
            "event_budget_coarse_delta",
            worst_plain <= 1.0,
            worst_plain,
            50,
            f"max events / nominal budget = {worst_plain:.4f} (delta >= 0.03 regime)",
        ),
        CheckRow(
            "event_budget_corrected_any_delta",
            worst_corr <= 1.0,
            worst_corr,
            50,
            f"max events / corrected budget = {worst_corr:.4f}",
        ),
    ]


def suite_events(seed: int) -> list[CheckRow]:
    spec = QuantizerSpec.from_grid(d=1, L=1.0, K=16)  # D = 4
    D = spec.n_bits
    initial = EmpiricalInitial(
        states=all_states(D), weights=np.full(1 << D, 1.0 / (1 << D))
    )
    config = SamplerConfig(spec=spec, eps=0.1, T=3.0, delta=0.05, seed=seed)
    n = 10_000
    result = sample(config, ExactScoreOracle(initial, config.T), n)
    lam = config.partition().expected_events()
    mean = result.stats.poisson_events / n
    sigma = math.sqrt(lam / n)
    z = abs(mean - lam) / sigma
    return [
        CheckRow(
            "poisson_event_mean",
            z <= 3.0,
            z,
            n,
            f"mean events {mean:.3f} vs expected {lam:.3f} ({z:.2f} sigma, cap 3)",
        )
    ]


def _d6_instance(seed: int):
    spec = QuantizerSpec.from_grid(d=1, L=1.0, K=64)  # D = 6
    rng = np.random.default_rng(seed + 1)
    initial = _random_initial(rng, spec.n_bits, 10)
    config = SamplerConfig.default_schedule(spec, 0.1, seed, init="exact-terminal")
    return spec, initial, config


def suite_unbiased(seed: int) -> list[CheckRow]:
    _, initial, config = _d6_instance(seed)
    n = 20_000
    result = sample(config, ExactScoreOracle(initial, config.T), n)
    target = exact_reverse_marginal(initial, config.T, config.T - config.delta)
    law = EmpiricalLaw.from_indices(state_to_index(result.states))
    tv = tv_plugin(law, target)
    threshold = 0.06  # multinomial slack for 64 states at 2e4 replicas
    return [
        CheckRow(
            "sampler_law_matches_exact",
            tv <= threshold,
            tv,
            n,
            f"plug-in TV = {tv:.4f} (threshold {threshold})",
        )
    ]


def suite_robustness(seed: int) -> list[CheckRow]:
    _, initial, config = _d6_instance(seed)
    grid = np.linspace(1e-3, config.T, 65)
    target_sq = 0.04
    oracle = calibrate_noise_scale(initial, config.T, target_sq, seed, grid)
    measured = score_entropy_loss(oracle, initial, config.T, grid)
    n = 50_000
    result = sample(config, oracle, n)
    reverse_target = exact_reverse_marginal(initial, config.T, config.T - config.delta)
    law = EmpiricalLaw.from_indices(state_to_index(result.states))
    kl = kl_exact(reverse_target, law.to_smoothed(len(reverse_target)))
    slack = 0.06  # estimation slack for 5e4 replicas over 64 states
    bound = (config.T - config.delta) * measured + slack
    return [
        CheckRow(
            "kl_growth_within_budget",
            kl <= bound,
            kl,
            n,
            f"smoothed KL = {kl:.4f} <= (T-delta)*L + slack = {bound:.4f} (L={measured:.4f})",
        )
    ]


def suite_early_stop(seed: int) -> list[CheckRow]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    n = 0
    for D in (4, 6, 8, 10):
        initial = _random_initial(rng, D, int(rng.integers(1, 7)))
        q0 = initial.to_dense()
        for delta in (0.001, 0.01, 0.1):
            q_delta = marginal_at(initial, delta)
            tv = 0.5 * float(np.abs(q0 - q_delta).sum())
            bound = 1.0 - math.exp(-delta * D)
            worst = max(worst, tv / bound)
            n += 1
    return [
        CheckRow(
            "early_stop_tv",
            worst <= 1.0,
            worst,
            n,
            f"max TV / (1 - e^(-delta D)) = {worst:.4f} (must be <= 1)",
        )
    ]


def suite_adjacency(seed: int) -> list[CheckRow]:
    reports = {
        ("tridiagonal", 8): (7, 2),
        ("dense", 8): (1, 7),
        ("hypercube", 3): (3, 3),
    }
    ok = all(graph_report(kind, size) == want for (kind, size), want in reports.items())
    rows = [
        CheckRow(
            "diameter_degree_table",
            ok,
            float(ok),
            len(reports),
            "tridiagonal(8)=(7,2), dense(8)=(1,7), hypercube(D=3)=(3,3)",
        )
    ]
    ordered = True
    for n in (8, 16, 32):
        D = int(math.log2(n))
        t_dense = mixing_time("dense", n)
        t_hyper = mixing_time("hypercube", D)
        t_tri = mixing_time("tridiagonal", n)
        ordered &= t_dense <= t_hyper <= t_tri
    rows.append(
        CheckRow(
            "mixing_order",
            ordered,
            float(ordered),
            3,
            "time to TV<=0.01: dense <= hypercube <= tridiagonal at n in {8,16,32}",
        )
    )
    return rows


SUITES = {
    "kernel": suite_kernel,
    "kl-decay": suite_kl_decay,
    "beta-bound": suite_beta_bound,
    "partition": suite_partition,
    "events": suite_events,
    "unbiased": suite_unbiased,
    "robustness": suite_robustness,
    "early-stop": suite_early_stop,
    "adjacency": suite_adjacency,
}

"""Built-in self-check suites behind the ``verify`` command.

Each suite cross-checks one load-bearing equivalence with an independent
oracle and reports pass/fail; the CLI exits nonzero if any suite fails.
Suites resolve protocol functions through their modules at call time so a
deliberately broken rule (a test fixture) is picked up.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import oracle, protocols
from .protocols import Response, SensorState
from .scenarios import Example


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str


def _suite_theorem1_equivalence() -> SuiteResult:
    """Distributed abstention votes fused by majority must equal the
    centralized naive-kernel classifier on every query, exactly."""
    rng = np.random.default_rng(2024)
    trials = 0
    for case in range(150):
        d = int(rng.integers(1, 4))
        n = int(rng.integers(1, 200))
        r = float(rng.uniform(0.01, 0.8))
        xs = rng.uniform(-1, 1, size=(n, d))
        ys = rng.integers(0, 2, size=n)
        train = [Example(xs[i], int(ys[i])) for i in range(n)]
        sensors = [SensorState(ex) for ex in train]
        for x in rng.uniform(-1, 1, size=(4, d)):
            responses = [
                protocols.respond_cls_abstain(s, x, r) for s in sensors
            ]
            fused = protocols.fuse_cls_abstain(responses)
            reference = oracle.naive_kernel_classify(train, x, r)
            trials += 1
            if fused != reference:
                return SuiteResult(
                    "theorem1_equivalence",
                    False,
                    f"mismatch in case {case}: fused={fused} kernel={reference}",
                )
    return SuiteResult(
        "theorem1_equivalence", True, f"{trials} query evaluations, 0 mismatches"
    )


def _suite_poisson_binomial() -> SuiteResult:
    """Convolution recurrence vs brute-force enumeration over all vote
    patterns, plus normalization at scale."""
    rng = np.random.default_rng(7)
    for n in (1, 2, 5, 8, 10):
        p = rng.random(n)
        pmf = oracle.exact_vote_distribution(p).pmf
        brute = np.zeros(n + 1)
        for bits in itertools.product((0, 1), repeat=n):
            prob = math.prod(p[i] if b else 1 - p[i] for i, b in enumerate(bits))
            brute[sum(bits)] += prob
        if np.max(np.abs(pmf - brute)) > 1e-12:
            return SuiteResult(
                "poisson_binomial_enumeration",
                False,
                f"n={n}: max pmf error {np.max(np.abs(pmf - brute)):.3e}",
            )
    big = oracle.exact_vote_distribution(rng.random(2000))
    drift = abs(math.fsum(big.pmf.tolist()) - 1.0)
    if drift > 1e-12:
        return SuiteResult(
            "poisson_binomial_enumeration",
            False,
            f"normalization drift {drift:.3e} at n=2000",
        )
    return SuiteResult(
        "poisson_binomial_enumeration", True, "matches enumeration within 1e-12"
    )


def _suite_fusion_properties() -> SuiteResult:
    """Permutation invariance, the scaled-mean Lipschitz bound, and the
    two tie-break conventions."""
    rng = np.random.default_rng(11)
    tie = [Response.VOTE1, Response.VOTE0]
    if protocols.fuse_cls_abstain(tie) != 1:
        return SuiteResult("fusion_properties", False, "vote-fraction tie must fuse to 1")
    if protocols.fuse_cls_noabstain(tie) != 0:
        return SuiteResult("fusion_properties", False, "strict-majority tie must fuse to 0")
    symbols = [Response.VOTE0, Response.VOTE1, Response.ABSTAIN]
    for _ in range(400):
        resp = [symbols[i] for i in rng.integers(0, 3, size=rng.integers(0, 25))]
        votes_only = [r for r in resp if r.is_vote]
        perm = list(resp)
        rng.shuffle(perm)
        perm_votes = [r for r in perm if r.is_vote]
        if protocols.fuse_cls_abstain(resp) != protocols.fuse_cls_abstain(perm):
            return SuiteResult("fusion_properties", False, "abstention fusion not permutation invariant")
        if protocols.fuse_specialist(resp) != protocols.fuse_specialist(perm):
            return SuiteResult("fusion_properties", False, "specialist fusion not permutation invariant")
        if protocols.fuse_reg_abstain(resp, 2.0) != protocols.fuse_reg_abstain(perm, 2.0):
            return SuiteResult("fusion_properties", False, "regression fusion not permutation invariant")
        if protocols.fuse_cls_noabstain(votes_only) != protocols.fuse_cls_noabstain(perm_votes):
            return SuiteResult("fusion_properties", False, "majority fusion not permutation invariant")
    c = 1.5
    for _ in range(400):
        n = int(rng.integers(1, 400))
        b1 = rng.integers(0, 2, size=n)
        b2 = rng.integers(0, 2, size=n)
        r1 = [Response.VOTE1 if b else Response.VOTE0 for b in b1]
        r2 = [Response.VOTE1 if b else Response.VOTE0 for b in b2]
        gap = abs(
            protocols.fuse_reg_noabstain_scaledmean(r1, c)
            - protocols.fuse_reg_noabstain_scaledmean(r2, c)
        )
        bound = 2 * c * np.sum(b1 != b2) / n
        if gap > bound + 1e-12:
            return SuiteResult(
                "fusion_properties",
                False,
                f"Lipschitz bound violated: gap {gap:.6f} > {bound:.6f}",
            )
    return SuiteResult("fusion_properties", True, "invariance, Lipschitz bound, tie-breaks hold")


_SUITES = (
    _suite_theorem1_equivalence,
    _suite_poisson_binomial,
    _suite_fusion_properties,
)


def run_verify_suites() -> list[SuiteResult]:
    return [suite() for suite in _SUITES]

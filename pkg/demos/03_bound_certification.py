"""Certify the loss bounds on one noisy and one exact run.

Every bound is evaluated on the trace and reported with its slack (the
smallest component of rhs - lhs). A negative slack beyond the numerical
tolerance would mean the inequality failed on this run.
"""

import numpy as np

from lambdapi import (
    BOUND_IDS,
    GeneratorSpec,
    NoiseModel,
    SeminormSpec,
    SolverConfig,
    appendix_c_violations,
    random_mdp,
    run_checks,
    run_lambda_pi,
)

mdp = random_mdp(GeneratorSpec(n_states=6, n_actions=3, seed=2, gamma=0.9))
n = mdp.n_states
spec = SeminormSpec.uniform(n, 2.0)
nu = np.full(n, 1.0 / n)

noisy = run_lambda_pi(
    mdp, np.zeros(n), SolverConfig(lam=0.5, max_iterations=200, stop_rule="none"),
    NoiseModel("uniform_bounded", 0.01, seed=2),
)
ids = [i for i in BOUND_IDS if not i.startswith(("thexact", "croclpi"))]
print("noisy run, lambda 0.5, |eps| <= 0.01")
for r in run_checks(noisy, ids, spec, nu, window=20):
    status = "n/a " if not r.applicable else ("ok  " if r.satisfied else "FAIL")
    print(f"  {status} {r.bound_id:18s} slack={r.slack: .3e}")

tail = max(np.abs(rec.loss).max() for rec in noisy.records[-20:])
limit = 2 * mdp.gamma * 0.01 / (1 - mdp.gamma) ** 2
print(f"  tail loss {tail:.3e} against the asymptotic level {limit:.3e}")

exact = run_lambda_pi(mdp, np.zeros(n), SolverConfig(lam=0.5, max_iterations=30, stop_rule="none"))
print("exact run, every pair k0 < k <= 30")
for r in run_checks(exact, [i for i in BOUND_IDS if i.startswith(("thexact", "croclpi"))], spec, k_max=30):
    print(f"  {'ok  ' if r.satisfied else 'FAIL'} {r.bound_id:18s} worst pair ({r.k0}, {r.k}) slack={r.slack: .3e}")

print("recurrence identities, worst violation:", appendix_c_violations(noisy))

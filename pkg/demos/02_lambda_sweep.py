"""Outer versus inner work as lambda moves from value to policy iteration.

Larger lambda means fewer outer iterations, but each backup needs more
inner iterations when it is computed without a linear solve. The sweep
reports both counts; it does not claim a best lambda.
"""

from lambdapi import GeneratorSpec, SolverConfig, counterexample_mdp, lambda_sweep, random_mdp

lambdas = (0.0, 0.25, 0.5, 0.75, 0.9, 0.99)
config = SolverConfig(inner_mode="mk", stop_epsilon=1e-3, max_iterations=1000)

for name, mdp in [
    ("random, 12 states, gamma 0.95", random_mdp(GeneratorSpec(12, 4, 4, seed=3, gamma=0.95))),
    ("two-state counterexample, gamma 0.9", counterexample_mdp(0.9)),
]:
    print(name)
    print(f"  {'lambda':>6} {'outer':>6} {'inner':>7} {'final loss':>11}")
    for lam, outer, inner, loss in lambda_sweep(mdp, lambdas, config):
        print(f"  {lam:6.2f} {outer:6d} {inner:7d} {loss:11.2e}")

"""T_lambda is not a contraction once the greedy policy can change.

On the two-state MDP where action 0 switches state and action 1 stays, two
value functions that differ by 1e-3 pick different greedy policies. Their
backups then differ by a constant vector of size 1/(1 - lambda gamma) - 1,
whatever the distance between the inputs.
"""

from lambdapi import noncontraction_witness

print(f"{'lambda':>6} {'ratio':>12} {'predicted':>12}")
for lam in (0.0, 0.1, 0.5, 0.9, 1.0):
    w = noncontraction_witness(lam, gamma=0.9, eps=1e-3)
    print(f"{lam:6.2f} {w['ratio']:12.2f} {w['predicted_ratio']:12.2f}")

w = noncontraction_witness(0.5, gamma=0.9, eps=1e-3)
print("v' - v       =", w["diff_in"])
print("T v' - T v   =", w["diff_out"], "(constant)")

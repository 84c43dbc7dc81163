"""
How far compression moves the neural tangent kernel, and a quick pass over
the error and conditioning checks.

Run:  python3 demos/ntk_and_bounds.py
"""
from collections import Counter

from hmcompress.experiments import bounds_battery, ntk_scaling

# %% NTK deviation against the compression tolerance.
res = ntk_scaling()
for d in res["rows"]:
    print(f"eps={d.epsilon:<7g} ||Theta - Theta_H||_F = {d.deviation:.3e}  (relative {d.relative:.2e})")
print(f"log-log slope {res['slope']:.3f}, largest deviation / eps = {res['constant']:.3g}")

# %% Bound battery (fewer seeds than the acceptance run).
rows = bounds_battery(quick=True)
tally = Counter((r["check"], "pass" if r["passed"] else ("n/a" if not r["applicable"] else "FAIL"))
                for r in rows)
for (check, outcome), count in sorted(tally.items()):
    print(f"{check:20s} {outcome:5s} {count}")

# %% [markdown]
# How much feedback does accuracy cost?
#
# Halving `eps` doubles the grid resolution, so the worst-case number of
# rounds grows like `1/eps`.  On Pigou instances the learner usually stops
# long before that bound, once no feasible toll could still move traffic.

# %%
import math

from congestion_tax import pigou_game
from congestion_tax.oracles import pigou_analytic
from congestion_tax.taxdesign import run

rows = []
for p in (2, 4):
    beta = float(p * (p - 1))
    for eps in (0.2, 0.1, 0.05, 0.025):
        res = run(pigou_game(1.0, p), eps, beta)
        bound = math.ceil(2 * 2 * beta / eps)
        gap = res.social_cost - pigou_analytic(1.0, p)[3]
        rows.append((p, eps, res.rounds, bound, gap))

# %%
print(" p    eps  rounds  round bound  social-cost gap")
for p, eps, rounds, bound, gap in rows:
    print(f"{p:2d}  {eps:5.3f}  {rounds:6d}  {bound:11d}  {gap:15.2e}")

# %% [markdown]
# Learning a toll on Pigou's network
#
# Two parallel links carry one unit of traffic.  The top link always costs
# `c`; the bottom one costs `u**p` at load `u`.  Left alone, drivers pile onto
# the bottom link until it is as slow as the top one, which wastes time.  The
# marginal-cost toll `u * p * u**(p-1)` fixes that, but here the designer does
# not know the cost functions: each round they post a toll, watch where
# traffic settles and what it pays, and refine the toll.

# %%
import numpy as np

from congestion_tax import pigou_game, solve_equilibrium
from congestion_tax.game import marginal_cost_tax, social_cost
from congestion_tax.oracles import pigou_analytic
from congestion_tax.taxdesign import run

c, p = 0.6, 4
game = pigou_game(c, p)
y_ne, y_opt, psi_ne, psi_opt = pigou_analytic(c, p)
print(f"untaxed equilibrium: {y_ne:.4f} on the bottom link, social cost {psi_ne:.4f}")
print(f"optimum:             {y_opt:.4f} on the bottom link, social cost {psi_opt:.4f}")

# %% [markdown]
# With full knowledge the toll is one line.  Solving the tolled game lands
# on the optimum, which is what the learner is trying to approximate.

# %%
full_info = solve_equilibrium(game, [None, marginal_cost_tax(game.costs[1])])
print("known-cost toll gives social cost", round(social_cost(game, full_info.load), 6))

# %% [markdown]
# Now the learner.  `eps` is the accuracy target and `beta` bounds how fast
# the unknown costs may bend (`p (p - 1)` for `u**p`).  Every probe round
# costs two equilibrium observations.

# %%
eps, beta = 0.05, float(p * (p - 1))
result = run(game, eps, beta)
print(result.termination, "after", result.rounds, "rounds,",
      result.exploratory_rounds, "of them probes")
print(f"learned-toll social cost {result.social_cost:.6f} (gap {result.social_cost - psi_opt:.2e})")

# %%
for rec in result.trace[:5] + result.trace[-3:]:
    moved = "" if rec.displacement is None else f"  probe f{rec.facility} moved load by {rec.displacement:.2e}"
    print(f"round {rec.round:3d}  bottom load {rec.load[1]:.4f}  social cost {rec.social_cost:.5f}{moved}")

# %% [markdown]
# The learned estimate on the bottom link next to the true marginal-cost
# toll, at the grid points the learner has pinned down.  The posted toll adds
# `eps * u` on top of the estimate, which keeps every equilibrium unique.

# %%
star = game.costs[1].marginal_tax()
learned = result.plan.base[1]
pts = np.array(result.state.known[1].points)
for u in pts[pts > 0][::6]:
    print(f"u={u:.3f}  learned {learned(u):.4f}  true {star(u):.4f}")

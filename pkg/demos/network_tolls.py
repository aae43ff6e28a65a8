# %% [markdown]
# Tolls on a small road network
#
# A diamond with a shortcut: four roads from `s` to `t` through two middle
# junctions, plus a link between them.  The learner never sees the
# per-road cost curves, only the equilibrium flows and travel times.

# %%
from importlib import resources

import numpy as np

from congestion_tax import solve_equilibrium
from congestion_tax.game import social_cost
from congestion_tax.io import load_instance
from congestion_tax.netgame import flow_decompose
from congestion_tax.oracles import optimal_social_cost
from congestion_tax.taxdesign import run

path = resources.files("congestion_tax") / "fixtures" / "diamond.json"
game, doc = load_instance(str(path))
print(game)

# %%
free = solve_equilibrium(game)
print("untaxed edge flows:", np.round(free.load, 4))
print("untaxed social cost:", round(social_cost(game, free.load), 5))
best = optimal_social_cost(game)
print(f"optimal social cost: {best.value:.5f} ({best.method})")

# %% [markdown]
# Equilibrium feedback comes as edge flows; the learner turns them back
# into path flows before deciding where to probe.

# %%
for _, p, w in flow_decompose(game, free.load).paths:
    print("path", p, "carries", round(w, 4))

# %%
result = run(game, doc["eps"], doc["beta"])
print(result.termination, "in", result.rounds, "rounds")
print("tolled edge flows:", np.round(result.trace[-1].load, 4))
print(f"tolled social cost {result.social_cost:.5f}, gap to optimum {result.social_cost - best.value:.2e}")
print("guarantee for this eps:", 6 * doc["eps"] * game.n_facilities)

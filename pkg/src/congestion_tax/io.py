"""JSON instance files and CSV/JSON run outputs.

Explicit game::

    {"type": "game",
     "costs": [{"kind": "constant", "c": 0.2}, {"kind": "monomial", "power": 2}],
     "weights": [1.0],
     "actions": [[[0], [1]]]}

Network game::

    {"type": "network", "vertices": 4,
     "edges": [{"from": 0, "to": 1, "cost": {"kind": "affine", "a": 0.1, "b": 0.5}}, ...],
     "commodities": [{"source": 0, "target": 3, "weight": 1.0}]}

Optional top-level keys ``eps`` and ``beta`` supply run defaults.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

from .game import CongestionGame, CostFunction
from .netgame import Network, NetworkGame


def game_from_dict(d: dict):
    kind = d.get("type", "network" if "edges" in d else "game")
    if kind == "game":
        costs = [CostFunction.from_dict(c) for c in d["costs"]]
        return CongestionGame(costs, d["weights"], d["actions"])
    if kind == "network":
        edges, costs = [], []
        for e in d["edges"]:
            if isinstance(e, dict):
                edges.append((e["from"], e["to"]))
                costs.append(CostFunction.from_dict(e["cost"]))
            else:
                edges.append((e[0], e[1]))
        if not costs:
            costs = [CostFunction.from_dict(c) for c in d["costs"]]
        comms = [(k["source"], k["target"], k["weight"]) for k in d["commodities"]]
        return NetworkGame(Network(d["vertices"], edges), costs, comms)
    raise ValueError(f"unknown instance type {kind!r}")


def game_to_dict(game) -> dict:
    if isinstance(game, NetworkGame):
        return {"type": "network", "vertices": game.network.n_vertices,
                "edges": [{"from": u, "to": v, "cost": c.to_dict()}
                          for (u, v), c in zip(game.network.edges, game.costs)],
                "commodities": [{"source": k.source, "target": k.target, "weight": k.weight}
                                for k in game.commodities]}
    return {"type": "game", "costs": [c.to_dict() for c in game.costs],
            "weights": game.weights.tolist(),
            "actions": [[list(a) for a in A] for A in game.actions]}


def load_instance(path) -> tuple[object, dict]:
    """Read a game or network file; returns the game and the raw document."""
    with open(path) as fh:
        doc = json.load(fh)
    return game_from_dict(doc), doc


def fmt(v) -> str:
    """12 significant digits, the format of every CSV number."""
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    if v is None:
        return ""
    return f"{float(v):.12g}"


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) if not isinstance(v, str) else v for v in r])


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")

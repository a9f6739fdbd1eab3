"""Problem registry: CLI-facing names mapped to algorithm factories.

Each entry can produce the transformed self-stabilizing algorithm, the
underlying fault-free ingredients (what the eligibility probe exercises), and
the LCL used for legality checking.
"""

from __future__ import annotations

import math

from .algorithms import (
    coloring_ingredients,
    edge_coloring_ingredients,
    incremental_coloring_ingredients,
    mis_ingredients,
    mm_ingredients,
)
from .lcl import (
    LclSpec,
    UnknownProblem,
    builtin_potential,
    coloring_lcl,
    edge_coloring_lcl,
    incremental_coloring_lcl,
    maximal_coloring_lcl,
    mis_lcl,
    mm_lcl,
)
from .simulate import CloneSimulated, LineSimulated, mis_to_color
from .transform import EdgeTransformed, IngredientSet, NodeTransformed

PROBLEM_NAMES = (
    "mis",
    "node-coloring",
    "max-node-coloring",
    "delta1-coloring",
    "inc-node-coloring",
    "mm",
    "edge-coloring",
    "2delta1-edge-coloring",
    "max-edge-coloring",
    "inc-edge-coloring",
)


def node_palette(delta: int, params: dict) -> int:
    if "palette" in params:
        return int(params["palette"])
    eps = float(params.get("epsilon", 1.0 / delta))
    return math.ceil((1.0 + eps) * delta)


def edge_palette(delta: int, params: dict) -> int:
    if "palette" in params:
        return int(params["palette"])
    eps = float(params.get("epsilon", 0.5))
    return math.ceil((2.0 + eps) * delta)


def _c_param(params: dict, default: int, lo: int, hi: int, what: str) -> int:
    c = int(params.get("c", default))
    if not lo <= c <= hi:
        raise ValueError(f"{what} needs {lo} <= c <= {hi}, got {c}")
    return c


def make_ingredients(name: str, delta: int, params: dict | None = None) -> IngredientSet:
    """The fault-free algorithm a problem rests on (reductions return the
    algorithm that actually runs underneath)."""
    params = params or {}
    if name == "mis":
        phase, detect = mis_ingredients()
        return IngredientSet("mis", "node", phase, detect, mis_lcl(),
                             builtin_potential("mis"), nu=1)
    if name == "node-coloring":
        palette = node_palette(delta, params)
        phase, detect = coloring_ingredients(palette, delta)
        return IngredientSet(f"node-coloring[{palette}]", "node", phase, detect,
                             coloring_lcl(palette), builtin_potential("coloring"), nu=0)
    if name in ("max-node-coloring", "delta1-coloring"):
        # runs maximal independent set on the clone graph
        phase, detect = mis_ingredients()
        return IngredientSet("mis", "node", phase, detect, mis_lcl(),
                             builtin_potential("mis"), nu=1)
    if name == "inc-node-coloring":
        c = _c_param(params, 3, 2, delta + 2, name)
        phase, detect = incremental_coloring_ingredients(c, delta)
        return IngredientSet(f"inc-node-coloring[{c}]", "node", phase, detect,
                             incremental_coloring_lcl(c),
                             builtin_potential("incremental-coloring", c), nu=c - 1)
    if name == "mm":
        phase, detect = mm_ingredients()
        return IngredientSet("mm", "edge", phase, detect, mm_lcl(),
                             builtin_potential("mm"), nu=1)
    if name == "edge-coloring":
        palette = edge_palette(delta, params)
        phase, detect = edge_coloring_ingredients(palette, delta)
        return IngredientSet(f"edge-coloring[{palette}]", "edge", phase, detect,
                             edge_coloring_lcl(palette), builtin_potential("edge-coloring"), nu=0)
    if name in ("max-edge-coloring", "2delta1-edge-coloring"):
        phase, detect = mis_ingredients()
        return IngredientSet("mis", "node", phase, detect, mis_lcl(),
                             builtin_potential("mis"), nu=1)
    if name == "inc-edge-coloring":
        c = _c_param(params, 3, 2, 2 * delta, name)
        line_delta = max(1, 2 * delta - 2)
        phase, detect = incremental_coloring_ingredients(c, line_delta)
        return IngredientSet(f"inc-edge-coloring[{c}]", "node", phase, detect,
                             incremental_coloring_lcl(c),
                             builtin_potential("incremental-coloring", c), nu=c - 1)
    raise UnknownProblem(name)


def problem_lcl(name: str, delta: int, params: dict | None = None) -> LclSpec:
    """The LCL that defines legality of the problem's own outputs."""
    params = params or {}
    if name == "mis":
        return mis_lcl()
    if name == "node-coloring":
        return coloring_lcl(node_palette(delta, params))
    if name == "max-node-coloring":
        c = _c_param(params, 3, 2, delta + 2, name)
        return maximal_coloring_lcl(c)
    if name == "delta1-coloring":
        return maximal_coloring_lcl(delta + 2)
    if name == "inc-node-coloring":
        c = _c_param(params, 3, 2, delta + 2, name)
        return incremental_coloring_lcl(c)
    if name == "mm":
        return mm_lcl()
    if name == "edge-coloring":
        return edge_coloring_lcl(edge_palette(delta, params))
    if name == "max-edge-coloring":
        c = _c_param(params, 3, 2, 2 * delta, name)
        return maximal_coloring_lcl(c, kind="edge")
    if name == "2delta1-edge-coloring":
        return maximal_coloring_lcl(2 * delta, kind="edge")
    if name == "inc-edge-coloring":
        c = _c_param(params, 3, 2, 2 * delta, name)
        return incremental_coloring_lcl(c, kind="edge")
    raise UnknownProblem(name)


def make_algorithm(name: str, delta: int, params: dict | None = None):
    params = params or {}
    ing = make_ingredients(name, delta, params)
    if name in ("mis", "node-coloring", "inc-node-coloring"):
        return NodeTransformed(ing)
    if name in ("mm", "edge-coloring"):
        return EdgeTransformed(ing)
    if name in ("max-node-coloring", "delta1-coloring"):
        if name == "delta1-coloring":
            c = delta + 2
        else:
            c = _c_param(params, 3, 2, delta + 2, name)
        return CloneSimulated(
            ing, alpha=c - 1, map_output=mis_to_color(c - 1),
            host_lcl=maximal_coloring_lcl(c), name=f"{name}[c={c}]",
        )
    if name in ("max-edge-coloring", "2delta1-edge-coloring"):
        if name == "2delta1-edge-coloring":
            c = 2 * delta
        else:
            c = _c_param(params, 3, 2, 2 * delta, name)
        return LineSimulated(
            ing, alpha=c - 1, map_output=mis_to_color(c - 1),
            host_lcl=maximal_coloring_lcl(c, kind="edge"),
            name=f"{name}[c={c}]", host_delta=delta,
        )
    if name == "inc-edge-coloring":
        c = _c_param(params, 3, 2, 2 * delta, name)
        return LineSimulated(
            ing, alpha=1, map_output=None,
            host_lcl=incremental_coloring_lcl(c, kind="edge"),
            name=f"{name}[c={c}]", host_delta=delta,
        )
    raise UnknownProblem(name)

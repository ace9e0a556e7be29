"""Versioned JSON persistence for dataflow graphs.

The document is deterministic (sorted keys) so identical graphs serialize to
identical bytes; expansions are derived data and are not persisted.
"""

from __future__ import annotations

import json
from typing import Any

from stencilkit.frontend.ast import (
    AxisConstraint,
    BinOp,
    Call,
    Compare,
    ComputationBlock,
    Const,
    EdgeIndex,
    Expr,
    Extent,
    FieldRead,
    HorizontalRegion,
    Interval,
    Offset,
    ScalarRef,
    Statement,
    UnaryOp,
    VBound,
)
from stencilkit.ir.graph import (
    ArrayInfo,
    DataflowGraph,
    DataflowState,
    LoopInfo,
    RankPlacement,
    StencilNode,
    Transition,
)
from stencilkit.ir.lower import compute_node_memlets
from stencilkit.scheduling import Layout, Schedule

FORMAT_NAME = "stencilkit-graph"
FORMAT_VERSION = 1


class SerializationError(Exception):
    pass


# -- expressions -------------------------------------------------------------


def expr_to_json(e: Expr) -> Any:
    if isinstance(e, Const):
        return {"k": "c", "v": e.value}
    if isinstance(e, ScalarRef):
        return {"k": "s", "n": e.name}
    if isinstance(e, FieldRead):
        return {"k": "r", "f": e.field, "o": [e.offset.di, e.offset.dj, e.offset.dk]}
    if isinstance(e, UnaryOp):
        return {"k": "u", "x": expr_to_json(e.operand)}
    if isinstance(e, BinOp):
        return {"k": "b", "op": e.op, "l": expr_to_json(e.lhs), "r": expr_to_json(e.rhs)}
    if isinstance(e, Compare):
        return {"k": "cmp", "op": e.op, "l": expr_to_json(e.lhs), "r": expr_to_json(e.rhs)}
    if isinstance(e, Call):
        return {"k": "f", "fn": e.func, "a": [expr_to_json(a) for a in e.args]}
    raise SerializationError(f"cannot serialize expression {e!r}")


def expr_from_json(doc: Any) -> Expr:
    kind = doc["k"]
    if kind == "c":
        return Const(doc["v"])
    if kind == "s":
        return ScalarRef(doc["n"])
    if kind == "r":
        di, dj, dk = doc["o"]
        return FieldRead(doc["f"], Offset(di, dj, dk))
    if kind == "u":
        return UnaryOp("-", expr_from_json(doc["x"]))
    if kind == "b":
        return BinOp(doc["op"], expr_from_json(doc["l"]), expr_from_json(doc["r"]))
    if kind == "cmp":
        return Compare(doc["op"], expr_from_json(doc["l"]), expr_from_json(doc["r"]))
    if kind == "f":
        return Call(doc["fn"], tuple(expr_from_json(a) for a in doc["a"]))
    raise SerializationError(f"unknown expression kind {kind!r}")


# -- blocks ------------------------------------------------------------------


def _interval_to_json(iv: Interval) -> Any:
    return [iv.start.anchor, iv.start.offset, iv.end.anchor, iv.end.offset]


def _interval_from_json(doc: Any) -> Interval:
    return Interval(VBound(doc[0], doc[1]), VBound(doc[2], doc[3]))


def _region_to_json(r: HorizontalRegion | None) -> Any:
    if r is None:
        return None

    def conv(c: AxisConstraint):
        enc = lambda e: None if e is None else [e.anchor, e.offset]
        return {"kind": c.kind, "lo": enc(c.lo), "hi": enc(c.hi)}

    return {"i": conv(r.i), "j": conv(r.j)}


def _region_from_json(doc: Any) -> HorizontalRegion | None:
    if doc is None:
        return None

    def conv(c) -> AxisConstraint:
        dec = lambda e: None if e is None else EdgeIndex(e[0], e[1])
        return AxisConstraint(c["kind"], dec(c["lo"]), dec(c["hi"]))

    return HorizontalRegion(conv(doc["i"]), conv(doc["j"]))


def _block_to_json(b: ComputationBlock) -> Any:
    return {
        "policy": b.policy,
        "interval": _interval_to_json(b.interval),
        "statements": [
            {
                "target": s.target,
                "expr": expr_to_json(s.expr),
                "region": _region_to_json(s.region),
            }
            for s in b.statements
        ],
    }


def _block_from_json(doc: Any) -> ComputationBlock:
    return ComputationBlock(
        policy=doc["policy"],
        interval=_interval_from_json(doc["interval"]),
        statements=[
            Statement(s["target"], expr_from_json(s["expr"]), _region_from_json(s["region"]))
            for s in doc["statements"]
        ],
    )


# -- graph -------------------------------------------------------------------


def graph_to_json(graph: DataflowGraph) -> str:
    doc = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "domain": list(graph.domain),
        "alignment": graph.alignment,
        "start_state": graph.start_state,
        "symbols": dict(sorted(graph.symbols.items())),
        "placement": {
            "own_i_start": graph.placement.own_i_start,
            "own_i_end": graph.placement.own_i_end,
            "own_j_start": graph.placement.own_j_start,
            "own_j_end": graph.placement.own_j_end,
        },
        "graph_version": graph.version,
        "arrays": {
            name: {
                "dims": list(info.dims),
                "dtype": info.dtype,
                "transient": info.transient,
                "extent": {
                    "i": list(info.extent.i),
                    "j": list(info.extent.j),
                    "k": list(info.extent.k),
                },
                "extension": {a: list(r) for a, r in sorted(info.extension.items())},
                "layout": info.layout.to_json(),
            }
            for name, info in sorted(graph.arrays.items())
        },
        "states": [
            {
                "name": state.name,
                "nodes": [
                    {
                        "name": node.name,
                        "uid": node.uid,
                        "participants": list(node.participants),
                        "kwargs": {
                            k: expr_to_json(v) for k, v in sorted(node.kwargs.items())
                        },
                        "schedule": node.schedule.to_json(),
                        "blocks": [_block_to_json(b) for b in node.blocks],
                    }
                    for node in state.sequence
                ],
            }
            for state in graph.states
        ],
        "transitions": [
            {
                "src": t.src,
                "dst": t.dst,
                "condition": None
                if t.condition is None
                else {"expr": expr_to_json(t.condition[0]), "flag": t.condition[1]},
                "assignments": {
                    k: expr_to_json(v) for k, v in sorted(t.assignments.items())
                },
            }
            for t in graph.transitions
        ],
        "loops": [
            {
                "var": l.var,
                "count": expr_to_json(l.count),
                "guard": l.guard,
                "body": list(l.body),
                "exit": l.exit,
                "unrollable": l.unrollable,
            }
            for l in graph.loops
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True)


def graph_from_json(text: str) -> DataflowGraph:
    doc = json.loads(text)
    if doc.get("format") != FORMAT_NAME:
        raise SerializationError("not a stencilkit graph document")
    if doc.get("version") != FORMAT_VERSION:
        raise SerializationError(f"unsupported graph format version {doc.get('version')!r}")

    arrays = {}
    for name, a in doc["arrays"].items():
        arrays[name] = ArrayInfo(
            name=name,
            dims=tuple(a["dims"]),
            dtype=a["dtype"],
            transient=a["transient"],
            extent=Extent(
                i=tuple(a["extent"]["i"]),
                j=tuple(a["extent"]["j"]),
                k=tuple(a["extent"]["k"]),
            ),
            layout=Layout.from_json(a["layout"]),
            extension={k: tuple(v) for k, v in a["extension"].items()},
        )

    states = []
    for sdoc in doc["states"]:
        state = DataflowState(name=sdoc["name"])
        for ndoc in sdoc["nodes"]:
            node = StencilNode(
                name=ndoc["name"],
                uid=ndoc["uid"],
                blocks=[_block_from_json(b) for b in ndoc["blocks"]],
                kwargs={k: expr_from_json(v) for k, v in ndoc["kwargs"].items()},
                schedule=Schedule.from_json(ndoc["schedule"]),
                participants=tuple(ndoc["participants"]),
            )
            state.sequence.append(node)
        states.append(state)

    placement = RankPlacement(**doc["placement"])
    graph = DataflowGraph(
        arrays=arrays,
        states=states,
        transitions=[
            Transition(
                t["src"],
                t["dst"],
                None
                if t["condition"] is None
                else (expr_from_json(t["condition"]["expr"]), t["condition"]["flag"]),
                {k: expr_from_json(v) for k, v in t["assignments"].items()},
            )
            for t in doc["transitions"]
        ],
        start_state=doc["start_state"],
        symbols=dict(doc["symbols"]),
        domain=tuple(doc["domain"]),
        placement=placement,
        alignment=doc["alignment"],
        loops=[
            LoopInfo(
                var=l["var"],
                count=expr_from_json(l["count"]),
                guard=l["guard"],
                body=list(l["body"]),
                exit=l["exit"],
                unrollable=l["unrollable"],
            )
            for l in doc["loops"]
        ],
        version=doc["graph_version"],
    )
    for state in graph.states:
        for node in state.sequence:
            compute_node_memlets(node, graph.arrays, graph.domain, graph.placement)
        state.rebuild_dataflow()
    return graph

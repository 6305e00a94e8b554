"""DOT export of an event log.

One graph node per event, labelled "creator:seq" with Lamport time and
frame, ranked by layer. Roots are filled red, decided final roots are
double circles, fork branches get a double border.
"""

from __future__ import annotations

import json


def dot_from_log(event_lines, atropos_hex=None) -> str:
    """Render events.jsonl lines (dicts or JSON strings) as DOT text."""
    records = []
    for line in event_lines:
        rec = json.loads(line) if isinstance(line, str) else line
        records.append(rec)
    atropos_hex = atropos_hex or set()

    by_id = {r["id"]: r for r in records}
    layers: dict[str, int] = {}
    for r in sorted(records, key=lambda r: (r["lamport"], r["id"])):
        ps = [p for p in r["parents"] if p in layers]
        layers[r["id"]] = max((layers[p] for p in ps), default=0) + 1

    # A creator emitting two events with one (epoch, seq) has forked.
    slot_count: dict[tuple, int] = {}
    for r in records:
        key = (r["epoch"], r["creator"], r["seq"])
        slot_count[key] = slot_count.get(key, 0) + 1

    out = ["digraph dag {", "  rankdir=BT;", "  node [shape=circle fontsize=10];"]
    by_layer: dict[int, list[str]] = {}
    for rid, layer in layers.items():
        by_layer.setdefault(layer, []).append(rid)

    for rid in sorted(by_id):
        r = by_id[rid]
        attrs = [f'label="{r["creator"]}:{r["seq"]}\\nL{r["lamport"]} F{r["frame"]}"']
        if r.get("root"):
            attrs.append('style=filled fillcolor="#ff9999"')
        if rid in atropos_hex:
            attrs.append("shape=doublecircle")
        if slot_count[(r["epoch"], r["creator"], r["seq"])] > 1:
            attrs.append("peripheries=2")
        out.append(f'  "{rid[:12]}" [{" ".join(attrs)}];')

    for layer in sorted(by_layer):
        members = " ".join(f'"{rid[:12]}"' for rid in sorted(by_layer[layer]))
        out.append(f"  {{ rank=same; {members} }}")

    for rid in sorted(by_id):
        for p in by_id[rid]["parents"]:
            if p in by_id:
                out.append(f'  "{rid[:12]}" -> "{p[:12]}";')
    out.append("}")
    return "\n".join(out)

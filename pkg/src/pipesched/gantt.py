"""SVG Gantt chart of a simulated timeline: one row per (device, stream)."""
from __future__ import annotations

from xml.sax.saxutils import escape

STREAMS = ("compute", "send", "recv")
FILL = {
    "fwd": "#4c78a8",
    "bwd": "#f58518",
    "send": "#54a24b",
    "recv": "#b279a2",
    "acc": "#444444",
}
ROW_H = 18
LABEL_W = 110
PAD = 6


def _kind(node: str) -> str:
    if node.startswith("ACC"):
        return "acc"
    if node.startswith("S"):
        return "send"
    if node.startswith("R"):
        return "recv"
    return "fwd" if node.startswith("F") else "bwd"


def render_svg(events: list[dict], width: int = 1200, title: str = "") -> str:
    """``events`` are timeline dicts with node/device/stream/start/end."""
    devices = sorted({e["device"] for e in events})
    t0 = min((e["start"] for e in events), default=0.0)
    t1 = max((e["end"] for e in events), default=1.0)
    span = (t1 - t0) or 1.0
    plot_w = width - LABEL_W - 2 * PAD
    scale = plot_w / span
    rows = [(d, s) for d in devices for s in STREAMS]
    row_of = {r: i for i, r in enumerate(rows)}
    top = PAD + (20 if title else 0)
    height = top + len(rows) * ROW_H + 24

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="monospace" font-size="10">',
        "<style>" + " ".join(f".{k}{{fill:{v}}}" for k, v in FILL.items()) + " .lbl{fill:#000}</style>",
    ]
    if title:
        out.append(f'<text x="{PAD}" y="{PAD + 12}" class="lbl">{escape(title)}</text>')
    for (d, s), i in row_of.items():
        y = top + i * ROW_H
        if i % 2 == 0:
            out.append(f'<rect x="{LABEL_W}" y="{y}" width="{plot_w + PAD}" height="{ROW_H}" fill="#f4f4f4"/>')
        out.append(f'<text x="{PAD}" y="{y + ROW_H - 5}" class="lbl">dev{d} {s}</text>')
    for e in events:
        if e["end"] <= e["start"]:
            continue
        y = top + row_of[(e["device"], e["stream"])] * ROW_H + 2
        x = LABEL_W + (e["start"] - t0) * scale
        w = (e["end"] - e["start"]) * scale
        kind = _kind(e["node"])
        out.append(
            f'<rect x="{x:.3f}" y="{y}" width="{w:.3f}" height="{ROW_H - 4}" class="{kind}" stroke="#fff" stroke-width="0.5">'
            f'<title>{escape(e["node"])} [{e["start"]:.6g}, {e["end"]:.6g}]</title></rect>'
        )
        if w > 7 * len(e["node"].split("@")[0]):
            out.append(f'<text x="{x + 2:.3f}" y="{y + ROW_H - 8}" fill="#fff">{escape(e["node"].split("@")[0])}</text>')
    axis_y = top + len(rows) * ROW_H + 14
    for i in range(11):
        t = t0 + span * i / 10
        x = LABEL_W + (t - t0) * scale
        out.append(f'<text x="{x:.3f}" y="{axis_y}" class="lbl" text-anchor="middle">{t:.6g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"

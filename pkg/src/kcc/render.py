"""Explanation rendering: query and matched prototypes as one SVG figure.

The query panel sits on the left; prototype panels (only those with at
least one match) follow, ordered by descending match count.  Matched
keypoints are drawn as filled circles joined by a line per match, with a
fixed color palette indexed by match order, so identical inputs always
produce byte-identical documents.  Class names are suppressed unless
explicitly requested; keypoint text labels are pass-through metadata.
"""

from __future__ import annotations

import base64
import mimetypes
from dataclasses import dataclass
from pathlib import Path

from .classifier import Prediction
from .errors import ValidationError
from .keypoints import Keypoint

_PALETTE = (
    "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4", "#42d4f4",
    "#f032e6", "#bfef45", "#469990", "#9a6324", "#800000", "#000075",
)

_MARGIN = 16.0
_GAP = 24.0
_HEADER = 56.0
_CAPTION = 20.0


@dataclass
class RenderOptions:
    panel_height: float = 220.0
    embed_images: bool = False
    image_root: str | None = None
    only_predicted_class: bool = True
    show_unmatched: bool = True
    show_class_names: bool = False
    class_names: list[str] | None = None


@dataclass
class _Panel:
    image_id: str
    x: float
    y: float
    width: float
    height: float
    orig_h: int
    orig_w: int
    caption: str
    href: str

    def place(self, kp: Keypoint) -> tuple[float, float]:
        r, c = kp.centroid_input
        return (
            self.x + c * self.width / self.orig_w,
            self.y + r * self.height / self.orig_h,
        )


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _esc(text: str) -> str:
    return (
        text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")
    )


def _resolve_image(image_id: str, image_paths: dict[str, str], opts: RenderOptions) -> str:
    rel = image_paths.get(image_id)
    if rel is None:
        raise ValidationError(f"no image path supplied for {image_id!r}")
    full = Path(opts.image_root) / rel if opts.image_root else Path(rel)
    if not full.exists():
        raise ValidationError(f"missing image file: {full}")
    if not opts.embed_images:
        return rel
    mime = mimetypes.guess_type(str(full))[0] or "application/octet-stream"
    payload = base64.b64encode(full.read_bytes()).decode("ascii")
    return f"data:{mime};base64,{payload}"


def _class_tag(label: int, opts: RenderOptions) -> str:
    if opts.show_class_names and opts.class_names and 0 <= label < len(opts.class_names):
        return opts.class_names[label]
    return f"class {label}"


def render_explanation(
    pred: Prediction,
    image_paths: dict[str, str],
    labels: dict[tuple[str, int], str] | None = None,
    options: RenderOptions | None = None,
) -> str:
    """Build the SVG document for one prediction; returns the document text."""
    opts = options or RenderOptions()
    labels = labels or {}
    ph = opts.panel_height

    if pred.abstained:
        return _render_abstained(pred, image_paths, opts)

    matches = pred.match_set.matches
    if opts.only_predicted_class:
        drawn_matches = [m for m in matches if m.class_label == pred.predicted_class]
    else:
        drawn_matches = list(matches)

    counts: dict[str, int] = {}
    class_of: dict[str, int] = {}
    for m in drawn_matches:
        counts[m.prototype_image_id] = counts.get(m.prototype_image_id, 0) + 1
        class_of[m.prototype_image_id] = m.class_label
    proto_order = sorted(counts, key=lambda pid: (-counts[pid], class_of[pid], pid))

    panels: dict[str, _Panel] = {}
    x = _MARGIN
    qh, qw = pred.image_dims[pred.query_image_id]
    query_panel = _Panel(
        image_id=pred.query_image_id,
        x=x,
        y=_HEADER,
        width=ph * qw / qh,
        height=ph,
        orig_h=qh,
        orig_w=qw,
        caption="query",
        href=_resolve_image(pred.query_image_id, image_paths, opts),
    )
    panels[pred.query_image_id] = query_panel
    x += query_panel.width + _GAP

    for pid in proto_order:
        h, w = pred.image_dims[pid]
        n = counts[pid]
        caption = f"prototype · {n} match" + ("es" if n != 1 else "")
        if opts.show_class_names:
            caption = f"prototype ({_class_tag(class_of[pid], opts)}) · {n}"
        panels[pid] = _Panel(
            image_id=pid,
            x=x,
            y=_HEADER,
            width=ph * w / h,
            height=ph,
            orig_h=h,
            orig_w=w,
            caption=caption,
            href=_resolve_image(pid, image_paths, opts),
        )
        x += panels[pid].width + _GAP

    total_w = x - _GAP + _MARGIN
    total_h = _HEADER + ph + _CAPTION + _MARGIN

    query_kp = {kp.segment_id: kp for kp in pred.query_keypoints}
    proto_kp = {
        (pid, kp.segment_id): kp
        for pid, kps in pred.prototype_keypoints.items()
        for kp in kps
    }

    panel_rank = {pid: i for i, pid in enumerate(proto_order)}
    drawn_matches.sort(
        key=lambda m: (panel_rank[m.prototype_image_id], m.query_segment_id)
    )

    out: list[str] = []
    out.append('<?xml version="1.0" encoding="UTF-8"?>')
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_fmt(total_w)}" height="{_fmt(total_h)}" '
        f'viewBox="0 0 {_fmt(total_w)} {_fmt(total_h)}">'
    )
    out.append(
        f'<rect x="0" y="0" width="{_fmt(total_w)}" height="{_fmt(total_h)}" fill="#ffffff"/>'
    )

    score = pred.scores.get(pred.predicted_class, 0.0)
    summary = (
        f"prediction: {_class_tag(pred.predicted_class, opts)} "
        f"· score {score:.3f} · {len(matches)} match"
        + ("es" if len(matches) != 1 else "")
        + f" · inspect {pred.complexity} image"
        + ("s" if pred.complexity != 1 else "")
    )
    out.append(
        f'<text x="{_fmt(_MARGIN)}" y="30" font-family="sans-serif" '
        f'font-size="16" fill="#111111">{_esc(summary)}</text>'
    )

    for pid in [pred.query_image_id] + proto_order:
        p = panels[pid]
        out.append(f'<g class="panel" data-image="{_esc(pid)}">')
        out.append(
            f'<image x="{_fmt(p.x)}" y="{_fmt(p.y)}" width="{_fmt(p.width)}" '
            f'height="{_fmt(p.height)}" preserveAspectRatio="none" href="{_esc(p.href)}"/>'
        )
        out.append(
            f'<rect x="{_fmt(p.x)}" y="{_fmt(p.y)}" width="{_fmt(p.width)}" '
            f'height="{_fmt(p.height)}" fill="none" stroke="#333333" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_fmt(p.x)}" y="{_fmt(p.y + p.height + 15)}" '
            f'font-family="sans-serif" font-size="12" fill="#333333">{_esc(p.caption)}</text>'
        )
        out.append("</g>")

    if opts.show_unmatched:
        matched_q = {m.query_segment_id for m in drawn_matches}
        for kp in sorted(pred.query_keypoints, key=lambda k: k.segment_id):
            if kp.segment_id in matched_q:
                continue
            cx, cy = query_panel.place(kp)
            out.append(
                f'<circle class="kp-dim" cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="4" '
                f'fill="#bbbbbb" fill-opacity="0.6" stroke="#888888" stroke-width="1"/>'
            )

    marker_elems: list[str] = []
    label_elems: list[str] = []
    for i, m in enumerate(drawn_matches):
        color = _PALETTE[i % len(_PALETTE)]
        qkp = query_kp[m.query_segment_id]
        pkp = proto_kp[(m.prototype_image_id, m.prototype_segment_id)]
        qx, qy = query_panel.place(qkp)
        px, py = panels[m.prototype_image_id].place(pkp)
        out.append(
            f'<line class="match" x1="{_fmt(qx)}" y1="{_fmt(qy)}" '
            f'x2="{_fmt(px)}" y2="{_fmt(py)}" stroke="{color}" '
            f'stroke-width="1.5" stroke-opacity="0.85"/>'
        )
        for cx, cy in ((qx, qy), (px, py)):
            marker_elems.append(
                f'<circle class="kp" cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="5" '
                f'fill="{color}" stroke="#ffffff" stroke-width="1.5"/>'
            )
        for (img_id, seg_id), (cx, cy) in (
            ((pred.query_image_id, m.query_segment_id), (qx, qy)),
            ((m.prototype_image_id, m.prototype_segment_id), (px, py)),
        ):
            text = labels.get((img_id, seg_id))
            if text:
                label_elems.append(
                    f'<text class="kp-label" x="{_fmt(cx + 7)}" y="{_fmt(cy - 7)}" '
                    f'font-family="sans-serif" font-size="10" fill="#111111">'
                    f"{_esc(text)}</text>"
                )

    out.extend(marker_elems)
    out.extend(label_elems)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _render_abstained(
    pred: Prediction, image_paths: dict[str, str], opts: RenderOptions
) -> str:
    ph = opts.panel_height
    qh, qw = pred.image_dims.get(pred.query_image_id, (1, 1))
    pw = ph * qw / qh if qh else ph
    total_w = _MARGIN * 2 + pw
    total_h = _HEADER + ph + _CAPTION + _MARGIN

    out = ['<?xml version="1.0" encoding="UTF-8"?>']
    out.append(
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_fmt(total_w)}" height="{_fmt(total_h)}" '
        f'viewBox="0 0 {_fmt(total_w)} {_fmt(total_h)}">'
    )
    out.append(
        f'<rect x="0" y="0" width="{_fmt(total_w)}" height="{_fmt(total_h)}" fill="#ffffff"/>'
    )
    out.append(
        f'<text x="{_fmt(_MARGIN)}" y="30" font-family="sans-serif" font-size="16" '
        f'fill="#a01010">no matches — abstained</text>'
    )
    if pred.query_image_id in pred.image_dims and pred.query_image_id in image_paths:
        href = _resolve_image(pred.query_image_id, image_paths, opts)
        out.append(f'<g class="panel" data-image="{_esc(pred.query_image_id)}">')
        out.append(
            f'<image x="{_fmt(_MARGIN)}" y="{_fmt(_HEADER)}" width="{_fmt(pw)}" '
            f'height="{_fmt(ph)}" preserveAspectRatio="none" href="{_esc(href)}"/>'
        )
        out.append(
            f'<rect x="{_fmt(_MARGIN)}" y="{_fmt(_HEADER)}" width="{_fmt(pw)}" '
            f'height="{_fmt(ph)}" fill="none" stroke="#333333" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{_fmt(_MARGIN)}" y="{_fmt(_HEADER + ph + 15)}" '
            f'font-family="sans-serif" font-size="12" fill="#333333">query</text>'
        )
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"

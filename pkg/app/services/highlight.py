"""
Attention highlighting.

Every sentence of a review is shown with its predicted label and attention
weight; sentences whose weight exceeds the threshold are highlighted. Two
renderers: ANSI for a terminal and a static HTML page.
"""

from __future__ import annotations

import html
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from app.core.errors import ConfigError
from app.core.logging import get_logger
from app.models.corpus import Review
from app.services.classifier import ReviewClassifier
from app.services.evaluation import NEGATIVE, NEUTRAL, POSITIVE, PolarityMap
from app.services.milnet import HierarchicalModel

logger = get_logger(__name__)

DEFAULT_THRESHOLD = 0.1
ANSI_HIGHLIGHT = "\x1b[7;31m"
ANSI_RESET = "\x1b[0m"
POLARITY_NAMES = {NEGATIVE: "negative", NEUTRAL: "neutral", POSITIVE: "positive"}

HTML_STYLE = """
body { font-family: sans-serif; max-width: 48em; margin: 2em auto; }
section { margin-bottom: 2em; }
table { border-collapse: collapse; width: 100%; }
td { padding: 0.2em 0.5em; vertical-align: top; }
td.num { text-align: right; font-variant-numeric: tabular-nums; }
tr.hl td.text { background: #f8d0d0; font-weight: bold; }
"""


@dataclass(frozen=True)
class SentenceView:
    text: str
    label: str
    attention: float
    highlighted: bool


@dataclass(frozen=True)
class ReviewView:
    review_id: str
    label: str
    sentences: tuple[SentenceView, ...]


def _label_name(probs: np.ndarray, attention: float, num_classes: int) -> str:
    if num_classes == 2:
        return str(int(np.argmax(probs)) + 1)
    polarity = PolarityMap(num_classes).label(probs, attention)
    return POLARITY_NAMES[int(polarity)]


def highlight_reviews(
    model: ReviewClassifier,
    reviews: Sequence[Review],
    threshold: float = DEFAULT_THRESHOLD,
) -> list[ReviewView]:
    """
    Raises:
        ConfigError: the model has no segment attention.
    """
    if not isinstance(model, HierarchicalModel):
        raise ConfigError("highlighting needs a multiple-instance model with attention")
    num_classes = model.spec.num_classes
    views = []
    for review, prediction in zip(reviews, model.predict_many(reviews), strict=True):
        sentences = tuple(
            SentenceView(
                text=segment.raw_text,
                label=_label_name(probs, float(alpha), num_classes),
                attention=float(alpha),
                highlighted=bool(alpha > threshold),
            )
            for segment, probs, alpha in zip(
                review.segments, prediction.segment_probs, prediction.attention, strict=True
            )
        )
        views.append(
            ReviewView(review_id=review.id, label=str(prediction.label), sentences=sentences)
        )
    marked = sum(s.highlighted for view in views for s in view.sentences)
    logger.info("Highlighted %d sentences in %d reviews", marked, len(views))
    return views


def render_ansi(views: Sequence[ReviewView]) -> str:
    lines = []
    for view in views:
        lines.append(f"review {view.review_id}  predicted {view.label}")
        for sentence in view.sentences:
            text = sentence.text
            if sentence.highlighted:
                text = f"{ANSI_HIGHLIGHT}{text}{ANSI_RESET}"
            lines.append(f"  [{sentence.label:>8}] a={sentence.attention:.3f}  {text}")
        lines.append("")
    return "\n".join(lines)


def render_html(views: Sequence[ReviewView], title: str = "Attention highlights") -> str:
    escape = html.escape
    parts = [
        "<!DOCTYPE html>",
        '<html lang="en">',
        "<head>",
        '<meta charset="utf-8">',
        f"<title>{escape(title)}</title>",
        f"<style>{HTML_STYLE}</style>",
        "</head>",
        "<body>",
        f"<h1>{escape(title)}</h1>",
    ]
    for view in views:
        parts.append("<section>")
        parts.append(
            f"<h2>Review {escape(view.review_id)}: predicted {escape(view.label)}</h2>"
        )
        parts.append("<table>")
        parts.append("<tr><th>Sentence</th><th>Label</th><th>Attention</th></tr>")
        for sentence in view.sentences:
            row_class = ' class="hl"' if sentence.highlighted else ""
            parts.append(
                f'<tr{row_class}><td class="text">{escape(sentence.text)}</td>'
                f"<td>{escape(sentence.label)}</td>"
                f'<td class="num">{sentence.attention:.3f}</td></tr>'
            )
        parts.append("</table>")
        parts.append("</section>")
    parts.extend(["</body>", "</html>", ""])
    return "\n".join(parts)

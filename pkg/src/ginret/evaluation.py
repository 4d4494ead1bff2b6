"""Cross-modal retrieval evaluation: exhaustive scoring, AP/MAP, PR curves."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import GinModel, encode_images, encode_texts, score_matrix
from .text_graph import TextGraph

logger = logging.getLogger(__name__)

TEXT_TO_IMAGE = "text2image"
IMAGE_TO_TEXT = "image2text"


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    scores: np.ndarray
    query_labels: np.ndarray
    candidate_labels: np.ndarray
    query_ids: tuple = ()
    candidate_ids: tuple = ()
    direction: str = TEXT_TO_IMAGE

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 2:
            raise ValueError("scores must be a matrix")
        if not np.isfinite(s).all():
            raise ValueError("scores must be finite")
        ql = np.asarray(self.query_labels, dtype=object)
        cl = np.asarray(self.candidate_labels, dtype=object)
        if ql.shape != (s.shape[0],) or cl.shape != (s.shape[1],):
            raise ValueError("label lists must match score matrix dimensions")
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "query_labels", ql)
        object.__setattr__(self, "candidate_labels", cl)
        object.__setattr__(self, "query_ids", tuple(self.query_ids) or tuple(str(i) for i in range(s.shape[0])))
        object.__setattr__(self, "candidate_ids", tuple(self.candidate_ids) or tuple(str(i) for i in range(s.shape[1])))

    def transpose(self) -> "ScoreMatrix":
        other = IMAGE_TO_TEXT if self.direction == TEXT_TO_IMAGE else TEXT_TO_IMAGE
        return ScoreMatrix(self.scores.T, self.candidate_labels, self.query_labels,
                           self.candidate_ids, self.query_ids, other)


@dataclass
class EvalReport:
    direction: str
    per_query_ap: np.ndarray
    map: float
    pr_points: list[tuple[float, float]]
    query_ids: tuple = ()
    excluded: int = 0


def score_all(model: GinModel, graph: TextGraph, texts, images, chunk: int = 256) -> ScoreMatrix:
    """Score every (text, image) pair with the model in inference mode."""
    if not texts or not images:
        raise ValueError("need at least one text and one image")
    t_feats = np.stack([t.features for t in texts])
    f_t = np.concatenate([encode_texts(model, graph, t_feats[i:i + chunk]) for i in range(0, len(texts), chunk)])
    f_i = encode_images(model, np.stack([im.features for im in images]))
    return ScoreMatrix(
        score_matrix(model, f_t, f_i),
        [t.label for t in texts],
        [im.label for im in images],
        tuple(t.doc_id for t in texts),
        tuple(im.img_id for im in images),
    )


def average_precision(ranked_relevance) -> float:
    """Mean of precision@p over the positions p holding a relevant item."""
    rel = np.asarray(ranked_relevance, dtype=bool)
    n_rel = int(rel.sum())
    if n_rel == 0:
        raise ValueError("average precision undefined without relevant items")
    hits = np.cumsum(rel)
    positions = np.arange(1, rel.size + 1)
    return float(np.sum((hits / positions)[rel]) / n_rel)


def rank_candidates(row) -> np.ndarray:
    """Indices by descending score; equal scores keep ascending index order."""
    return np.argsort(-np.asarray(row), kind="stable")


def evaluate(sm: ScoreMatrix) -> EvalReport:
    """Per-query AP, MAP and a query-averaged PR curve.

    Queries with no same-class candidate are excluded (and counted). PR
    points are taken at every rank cut-off: mean recall against mean
    interpolated precision (max precision at that or any deeper cut-off).
    """
    n_q, n_c = sm.scores.shape
    if n_q == 0 or n_c == 0:
        raise ValueError("empty score matrix")
    aps, ids = [], []
    recall_sum = np.zeros(n_c)
    prec_sum = np.zeros(n_c)
    excluded = 0
    positions = np.arange(1, n_c + 1)
    for q in range(n_q):
        order = rank_candidates(sm.scores[q])
        rel = sm.candidate_labels[order] == sm.query_labels[q]
        if not rel.any():
            excluded += 1
            continue
        aps.append(average_precision(rel))
        ids.append(sm.query_ids[q])
        hits = np.cumsum(rel)
        recall_sum += hits / hits[-1]
        prec_sum += np.maximum.accumulate((hits / positions)[::-1])[::-1]
    if excluded:
        logger.warning("%s: excluded %d queries without relevant candidates", sm.direction, excluded)
    if not aps:
        raise ValueError("no query has a relevant candidate")
    ap = np.array(aps)
    n = len(aps)
    pr = [(float(r / n), float(p / n)) for r, p in zip(recall_sum, prec_sum)]
    return EvalReport(sm.direction, ap, float(ap.mean()), pr, tuple(ids), excluded)


def evaluate_both(sm: ScoreMatrix) -> tuple[EvalReport, EvalReport]:
    return evaluate(sm), evaluate(sm.transpose())


def write_reports(reports, out_dir) -> dict[str, Path]:
    """``report.tsv`` (direction/MAP header lines then per-query AP rows) and
    one ``pr_<direction>.tsv`` of recall/precision rows per direction."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.tsv"}
    with open(paths["report"], "w", encoding="utf-8", newline="\n") as fh:
        for r in reports:
            fh.write(f"{r.direction}\t{r.map:.9g}\n")
        for r in reports:
            for qid, ap in zip(r.query_ids, r.per_query_ap):
                fh.write(f"{r.direction}\t{qid}\t{ap:.9g}\n")
    for r in reports:
        p = out / f"pr_{r.direction}.tsv"
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            for rec, prec in r.pr_points:
                fh.write(f"{rec:.9g}\t{prec:.9g}\n")
        paths[r.direction] = p
    return paths

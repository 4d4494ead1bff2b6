"""Corpus files, manifest, and a seeded synthetic corpus generator.

File formats (UTF-8, ``\\n`` line endings):

* texts:  ``doc_id<TAB>label<TAB>space separated tokens``
* images: ``img_id<TAB>label<TAB>comma separated decimals``
* labels: one class name per line
* splits: ``pair_id<TAB>train|test``
* embeddings: word2vec text format (see :mod:`ginret.text_graph`)
* manifest: JSON object mapping ``texts``/``images``/``labels``/``embeddings``/
  ``splits`` to paths relative to the manifest's directory

A text and an image sharing an id form a pair.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .model import ImageSample
from .text_graph import EmbeddingTable, save_embeddings

logger = logging.getLogger(__name__)

SPLITS = ("train", "test")
MANIFEST_KEYS = ("texts", "images", "labels", "embeddings", "splits")


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    doc_id: str
    label: str
    tokens: tuple[str, ...]


@dataclass
class CorpusManifest:
    texts: Path
    images: Path
    labels: Path
    embeddings: Path
    splits: Path
    classes: list[str] = field(default_factory=list)
    split_of: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "CorpusManifest":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"manifest not found: {path}")
        raw = json.loads(path.read_text(encoding="utf-8"))
        unknown = set(raw) - set(MANIFEST_KEYS)
        missing = set(MANIFEST_KEYS) - set(raw)
        if unknown or missing:
            raise DataError(f"{path}: unknown keys {sorted(unknown)}, missing keys {sorted(missing)}")
        paths = {k: path.parent / raw[k] for k in MANIFEST_KEYS}
        m = cls(**paths)
        m.classes = read_labels(m.labels)
        m.split_of = read_splits(m.splits)
        return m


@dataclass
class Corpus:
    documents: list[Document]
    images: list[ImageSample]
    classes: list[str]
    split_of: dict[str, str]

    def split(self, name: str) -> tuple[list[Document], list[ImageSample]]:
        if name not in SPLITS and name != "all":
            raise ValueError(f"unknown split {name!r}")
        keep = lambda i: name == "all" or self.split_of[i] == name  # noqa: E731
        return [d for d in self.documents if keep(d.doc_id)], [im for im in self.images if keep(im.img_id)]


def _require(path) -> Path:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    return path


def _lines(path):
    with open(_require(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line:
                yield lineno, line


def read_labels(path) -> list[str]:
    classes = [line for _, line in _lines(path)]
    if len(set(classes)) != len(classes):
        raise DataError(f"{path}: duplicate class names")
    return classes


def read_splits(path) -> dict[str, str]:
    out = {}
    for lineno, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 2 or parts[1] not in SPLITS:
            raise DataError(f"{path}:{lineno}: expected 'id<TAB>train|test'")
        if parts[0] in out:
            raise DataError(f"{path}:{lineno}: id {parts[0]!r} assigned twice")
        out[parts[0]] = parts[1]
    return out


def read_texts(path) -> list[Document]:
    docs = []
    for lineno, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 'doc_id<TAB>label<TAB>tokens'")
        docs.append(Document(parts[0], parts[1], tuple(parts[2].split())))
    return docs


def read_images(path) -> list[ImageSample]:
    images, dim = [], None
    for lineno, line in _lines(path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 'img_id<TAB>label<TAB>values'")
        try:
            vals = [float(v) for v in parts[2].split(",")]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: bad number ({exc})") from None
        if dim is None:
            dim = len(vals)
        elif len(vals) != dim:
            raise DataError(f"{path}:{lineno}: expected {dim} values, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"{path}:{lineno}: non-finite feature value")
        images.append(ImageSample(np.array(vals), parts[1], parts[0]))
    return images


def load_corpus(manifest: CorpusManifest) -> Corpus:
    docs = read_texts(manifest.texts)
    images = read_images(manifest.images)
    classes = manifest.classes or read_labels(manifest.labels)
    split_of = manifest.split_of or read_splits(manifest.splits)
    known = set(classes)
    for kind, items, key in (("text", docs, "doc_id"), ("image", images, "img_id")):
        ids = [getattr(x, key) for x in items]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate {kind} ids in {manifest.texts if kind == 'text' else manifest.images}")
        for x in items:
            if x.label not in known:
                raise DataError(f"{kind} {getattr(x, key)!r}: unknown label {x.label!r}")
    t_ids = {d.doc_id: d for d in docs}
    i_ids = {im.img_id: im for im in images}
    if set(t_ids) != set(i_ids):
        only_t = sorted(set(t_ids) - set(i_ids))[:5]
        only_i = sorted(set(i_ids) - set(t_ids))[:5]
        raise DataError(f"text/image id mismatch: text-only {only_t}, image-only {only_i}")
    for pid, d in t_ids.items():
        if i_ids[pid].label != d.label:
            raise DataError(f"pair {pid!r}: text label {d.label!r} != image label {i_ids[pid].label!r}")
    if set(split_of) != set(t_ids):
        missing = sorted(set(t_ids) - set(split_of))[:5]
        extra = sorted(set(split_of) - set(t_ids))[:5]
        raise DataError(f"split assignments do not cover the corpus: unassigned {missing}, unknown {extra}")
    logger.info("loaded %d pairs (%d train, %d test), %d classes", len(docs),
                sum(v == "train" for v in split_of.values()), sum(v == "test" for v in split_of.values()),
                len(classes))
    return Corpus(docs, images, list(classes), dict(split_of))


def load_manifest_corpus(path) -> tuple[Corpus, CorpusManifest]:
    m = CorpusManifest.load(path)
    return load_corpus(m), m


# --- writers ------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_texts(docs, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for d in docs:
            fh.write(f"{d.doc_id}\t{d.label}\t{' '.join(d.tokens)}\n")


def write_images(images, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for im in images:
            fh.write(f"{im.img_id}\t{im.label}\t{','.join(_fmt(v) for v in im.features)}\n")


def write_labels(classes, path) -> None:
    Path(path).write_text("".join(f"{c}\n" for c in classes), encoding="utf-8", newline="\n")


def write_splits(split_of, path) -> None:
    Path(path).write_text("".join(f"{k}\t{v}\n" for k, v in split_of.items()), encoding="utf-8", newline="\n")


def write_corpus(corpus: Corpus, emb: EmbeddingTable, out_dir) -> Path:
    """Write all corpus files plus ``manifest.json``; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = {"texts": "texts.tsv", "images": "images.tsv", "labels": "labels.txt",
             "embeddings": "embeddings.txt", "splits": "splits.tsv"}
    write_texts(corpus.documents, out / names["texts"])
    write_images(corpus.images, out / names["images"])
    write_labels(corpus.classes, out / names["labels"])
    write_splits(corpus.split_of, out / names["splits"])
    save_embeddings(emb, out / names["embeddings"])
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps(names, indent=2) + "\n", encoding="utf-8", newline="\n")
    return manifest


# --- synthetic data -------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 3
    texts_per_class: int = 100
    images_per_class: int = 100
    vocab_size: int = 60
    embed_dim: int = 16
    image_dim: int = 32
    noise_level: float = 0.1
    seed: int = 0
    doc_length: int = 24
    test_fraction: float = 0.3
    word_spread: float = 0.3

    def __post_init__(self):
        if min(self.num_classes, self.texts_per_class, self.images_per_class, self.doc_length) < 1:
            raise ValueError("counts must be positive")
        if min(self.embed_dim, self.image_dim) < 1:
            raise ValueError("dimensions must be positive")
        if self.noise_level < 0 or self.word_spread < 0:
            raise ValueError("noise_level and word_spread must be >= 0")
        if not 0 <= self.test_fraction < 1:
            raise ValueError("test_fraction must be in [0, 1)")
        if self.vocab_size < self.num_classes:
            raise ValueError(f"vocab_size ({self.vocab_size}) < num_classes ({self.num_classes})")
        if self.texts_per_class != self.images_per_class:
            raise ValueError("texts_per_class must equal images_per_class (texts and images are paired)")


@dataclass
class SyntheticCorpus:
    corpus: Corpus
    embeddings: EmbeddingTable
    word_class: np.ndarray


def generate_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    """Clustered toy corpus.

    Word ``i`` belongs to class ``i % num_classes`` and is embedded near that
    class's centre. A class-c document draws each token from class-c words,
    except that with probability ``noise_level`` the token is drawn from the
    whole vocabulary. A class-c image is the class image centre plus Gaussian
    noise of scale ``noise_level``.
    """
    rng = np.random.default_rng(spec.seed)
    n_cls = spec.num_classes
    width = len(str(spec.vocab_size - 1))
    words = tuple(f"w{i:0{width}d}" for i in range(spec.vocab_size))
    word_class = np.arange(spec.vocab_size) % n_cls
    emb_centres = rng.normal(size=(n_cls, spec.embed_dim))
    vectors = emb_centres[word_class] + spec.word_spread * rng.normal(size=(spec.vocab_size, spec.embed_dim))
    img_centres = rng.normal(size=(n_cls, spec.image_dim))
    classes = [f"class{c}" for c in range(n_cls)]
    members = [np.flatnonzero(word_class == c) for c in range(n_cls)]

    docs, images, split_of = [], [], {}
    n_test = int(round(spec.test_fraction * spec.texts_per_class))
    for c in range(n_cls):
        for i in range(spec.texts_per_class):
            pid = f"c{c}_{i:04d}"
            noisy = rng.random(spec.doc_length) < spec.noise_level
            own = members[c][rng.integers(0, len(members[c]), size=spec.doc_length)]
            anywhere = rng.integers(0, spec.vocab_size, size=spec.doc_length)
            tokens = tuple(words[j] for j in np.where(noisy, anywhere, own))
            docs.append(Document(pid, classes[c], tokens))
            feats = img_centres[c] + spec.noise_level * rng.normal(size=spec.image_dim)
            images.append(ImageSample(feats, classes[c], pid))
            split_of[pid] = "test" if i >= spec.texts_per_class - n_test else "train"
    corpus = Corpus(docs, images, classes, split_of)
    return SyntheticCorpus(corpus, EmbeddingTable(words, vectors), word_class)


def write_synthetic(spec: SyntheticSpec, out_dir) -> Path:
    syn = generate_synthetic(spec)
    manifest = write_corpus(syn.corpus, syn.embeddings, out_dir)
    (Path(out_dir) / "synthetic_spec.json").write_text(
        json.dumps(asdict(spec), indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n"
    )
    return manifest

"""On-disk datasets: a text manifest pointing at P5 views.

Manifest format, one case per line, whitespace separated::

    <v_ant> <v_post> <v_llat> <v_rlat> <v_lpo> <v_rpo> <q_ant> ... <q_rpo> <label>

with ``label`` one of ``neg``, ``int``, ``high``. Relative paths resolve
against the manifest's directory. Lines starting with ``#`` are ignored.
A view may have a companion mask stored next to it as ``<stem>_mask.pgm``.
"""
from __future__ import annotations

import os

from .imaging import image_to_mask, mask_to_image, read_image, write_image
from .phantom import LABEL_TOKENS, TOKEN_LABELS, VIEWS, CaseStudy

__all__ = ["ManifestError", "ManifestEntry", "read_manifest", "write_manifest",
           "save_case", "load_case", "mask_path"]


class ManifestError(ValueError):
    pass


class ManifestEntry:
    __slots__ = ("case_id", "ventilation", "perfusion", "label")

    def __init__(self, case_id, ventilation, perfusion, label):
        self.case_id = case_id
        self.ventilation = list(ventilation)
        self.perfusion = list(perfusion)
        self.label = label

    def __repr__(self):
        return f"ManifestEntry({self.case_id!r}, label={self.label!r})"


def mask_path(image_path):
    stem, ext = os.path.splitext(image_path)
    return f"{stem}_mask{ext}"


def case_id_from_path(path):
    # <case>_<modality>_<view>.pgm
    return os.path.basename(path).rsplit("_", 2)[0]


def read_manifest(path) -> list:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 13:
                raise ManifestError(f"{path}:{lineno}: expected 12 image paths and a label, "
                                    f"got {len(parts)} fields")
            token = parts[12]
            if token not in TOKEN_LABELS:
                raise ManifestError(f"{path}:{lineno}: unknown label token {token!r}")
            paths = [p if os.path.isabs(p) else os.path.join(base, p) for p in parts[:12]]
            entries.append(ManifestEntry(case_id_from_path(parts[0]), paths[:6], paths[6:],
                                         TOKEN_LABELS[token]))
    return entries


def write_manifest(path, entries) -> None:
    base = os.path.dirname(os.path.abspath(path))
    os.makedirs(base, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# ventilation: " + " ".join(VIEWS) + " | perfusion: " + " ".join(VIEWS)
                 + " | label\n")
        for e in entries:
            rel = [os.path.relpath(p, base) for p in (*e.ventilation, *e.perfusion)]
            fh.write(" ".join(rel) + " " + LABEL_TOKENS[e.label] + "\n")


def _view_paths(directory, case_id):
    v = [os.path.join(directory, f"{case_id}_v_{view}.pgm") for view in VIEWS]
    q = [os.path.join(directory, f"{case_id}_q_{view}.pgm") for view in VIEWS]
    return v, q


def save_case(directory, case_id, ventilation, perfusion, label,
              ventilation_masks=None, perfusion_masks=None) -> ManifestEntry:
    """Write the 12 views (and optional masks) as P5 files."""
    v_paths, q_paths = _view_paths(directory, case_id)
    for p, im in zip(v_paths + q_paths, (*ventilation, *perfusion)):
        write_image(p, im)
    if ventilation_masks is not None:
        for p, m in zip(v_paths + q_paths, (*ventilation_masks, *perfusion_masks)):
            write_image(mask_path(p), mask_to_image(m))
    return ManifestEntry(case_id, v_paths, q_paths, label)


def load_case(entry: ManifestEntry) -> CaseStudy:
    for p in (*entry.ventilation, *entry.perfusion):
        if not os.path.exists(p):
            raise FileNotFoundError(p)
    return CaseStudy(tuple(read_image(p) for p in entry.ventilation),
                     tuple(read_image(p) for p in entry.perfusion),
                     entry.label, case_id=entry.case_id)


def load_masks(entry: ManifestEntry):
    """Masks stored next to the views; returns (ventilation, perfusion) tuples."""
    out = []
    for paths in (entry.ventilation, entry.perfusion):
        masks = []
        for p in paths:
            mp = mask_path(p)
            if not os.path.exists(mp):
                raise FileNotFoundError(mp)
            masks.append(image_to_mask(read_image(mp)))
        out.append(tuple(masks))
    return tuple(out)

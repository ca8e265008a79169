import os

import numpy as np
import pytest

from vqpe.dataset import (ManifestError, load_case, load_masks, mask_path, read_manifest,
                          save_case, write_manifest)
from vqpe.imaging import LungMask
from vqpe.phantom import LABEL_TOKENS, PhantomSpec, generate_case


def test_manifest_round_trip(tmp_path):
    case = generate_case(PhantomSpec(image_size=16, defect_count=1,
                                     defect_radius_range=(1.5, 1.5), seed=1))
    masks = [LungMask(b) for b in case.lung_masks]
    e = save_case(str(tmp_path / "cases"), "c7", case.ventilation, case.perfusion, case.label,
                  masks, masks)
    path = str(tmp_path / "manifest.txt")
    write_manifest(path, [e])
    (entry,) = read_manifest(path)
    assert entry.case_id == "c7" and entry.label == case.label
    # paths are stored relative to the manifest
    line = open(path).read().splitlines()[1]
    assert line.startswith(os.path.join("cases", "c7_v_ant.pgm"))
    assert line.split()[-1] == LABEL_TOKENS[case.label]
    loaded = load_case(entry)
    assert loaded == case
    vm, qm = load_masks(entry)
    assert all(np.array_equal(a.bits, b) for a, b in zip(vm, case.lung_masks))


def test_mask_path():
    assert mask_path("a/b/c_v_ant.pgm") == "a/b/c_v_ant_mask.pgm"


def test_manifest_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_manifest(str(tmp_path / "none.txt"))
    p = tmp_path / "m.txt"
    p.write_text("# header\n" + " ".join(["x.pgm"] * 12) + " maybe\n")
    with pytest.raises(ManifestError, match="unknown label"):
        read_manifest(str(p))
    p.write_text(" ".join(["x.pgm"] * 11) + " neg\n")
    with pytest.raises(ManifestError, match="12 image paths"):
        read_manifest(str(p))
    p.write_text(" ".join(["x_v_ant.pgm"] * 12) + " neg\n")
    (entry,) = read_manifest(str(p))
    with pytest.raises(FileNotFoundError):
        load_case(entry)

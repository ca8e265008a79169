import numpy as np
import pytest

from vqpe import pipeline
from vqpe.features import SubtractionImage
from vqpe.imaging import GrayImage
from vqpe.phantom import PhantomSpec, generate_case, generate_dataset
from vqpe.pipeline import (PipelineConfig, derive_seed, preprocess_case, preprocess_image,
                           process_cases, sweep_report)
from vqpe.registration import TransformParams, overlap_fitness

SMALL = PipelineConfig(phantom_size=32, ga_population=12, ga_generations=8,
                       hmc_n_leapfrog=10, hmc_n_burnin=20, hmc_n_committee=10, hmc_thin=1,
                       image_size=16, n_inputs=3, vr=0.9)


def test_derive_seed_stable_and_distinct():
    assert derive_seed(0, "align", 3) == derive_seed(0, "align", 3)
    seeds = {derive_seed(0, "align", i) for i in range(50)}
    seeds |= {derive_seed(0, "train", 0), derive_seed(1, "align", 0)}
    assert len(seeds) == 52


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(vr=0)
    with pytest.raises(ValueError):
        PipelineConfig(ga_population=1)
    with pytest.raises(ValueError):
        PipelineConfig(hmc_step_size=0)
    with pytest.raises(ValueError):
        PipelineConfig(segment_level=1.5)
    assert PipelineConfig().with_updates(vr=0.8).vr == 0.8
    assert "hmc_step_size" in PipelineConfig.keys()


def test_preprocess_removes_ventilation_hotspot():
    case = generate_case(PhantomSpec(hotspot=True, throat=True, stomach=True, seed=2))
    v = case.ventilation[0]
    out, mask = preprocess_image(v, True, PipelineConfig())
    assert out.pixels.max() <= 255 and out.pixels.min() >= 0
    # lung mask matches the true lung field closely
    truth = case.lung_masks[0]
    inter = np.sum(mask.bits & truth)
    union = np.sum(mask.bits | truth)
    assert inter / union > 0.85
    # nothing survives outside the mask (throat and stomach are gone)
    assert not out.pixels[~mask.bits].any()


def test_preprocess_case_shapes():
    case = generate_case(PhantomSpec(image_size=32, defect_count=1,
                                     defect_radius_range=(2, 2), seed=1))
    prep = preprocess_case(case, SMALL)
    assert len(prep.ventilation) == len(prep.perfusion_masks) == 6
    assert prep.label == case.label


def test_alignment_recovers_misalignment():
    shift = TransformParams(1.0, 0.0, 3.0, -2.0)
    case = generate_case(PhantomSpec(misalignment=shift, seed=5))
    before = [overlap_fitness(v, q, TransformParams()) for v, q in
              zip(case.ventilation, case.perfusion)]
    (al,) = process_cases([case], PipelineConfig())
    assert min(al.fitness) > 0.95
    assert np.mean(al.fitness) > np.mean(before)
    for t in al.transforms:
        assert abs(t.tx + 3) <= 1 and abs(t.ty - 2) <= 1
    subs = al.subtractions()
    assert all(isinstance(s, SubtractionImage) for s in subs)


@pytest.fixture(scope="module")
def small_aligned():
    cases = generate_dataset(SMALL.class_specs(), (6, 6, 4), seed=1)
    aligned = process_cases(cases, SMALL)
    return aligned[:11], aligned[11:]


def test_fit_features_clamps_inputs(small_aligned):
    train, _ = small_aligned
    x = pipeline.case_vectors(train, 16)
    fm = pipeline.fit_features(x, [c.label for c in train], 16, 0.5, 50)
    assert len(fm.sof.chosen) == fm.pca.n_components
    z = fm.transform(x)
    np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-9)


def test_sweep_single_cell(small_aligned):
    train, val = small_aligned
    results = sweep_report(train, val, (16,), (3,), (0.9,), SMALL)
    assert len(results) == 1
    row = pipeline.result_row(results[0])
    assert len(row) == len(pipeline.SWEEP_HEADER)
    table = pipeline.format_table([row])
    assert table.splitlines()[0].split("\t") == pipeline.SWEEP_HEADER
    assert 0 <= results[0].auc <= 1


def test_sweep_grid_order_and_determinism(small_aligned):
    train, val = small_aligned
    a = sweep_report(train, val, (8, 16), (2, 3), (0.8, 0.9), SMALL)
    assert [(r.image_size, r.n_inputs, r.vr) for r in a] == [
        (s, n, v) for s in (8, 16) for n in (2, 3) for v in (0.8, 0.9)]
    b = sweep_report(train, val, (8, 16), (2, 3), (0.8, 0.9), SMALL)
    rows = lambda rs: pipeline.format_table([pipeline.result_row(r) for r in rs])
    assert rows(a) == rows(b)
    summary = pipeline.summarize(a)
    assert len(summary) == 12
    for row in summary[:3]:
        assert row[0] == "sensitivity"
    with pytest.raises(ValueError):
        sweep_report(train, val, (), (3,), (0.9,), SMALL)


def test_table1_benchmark_small():
    rows, fit = pipeline.table1_benchmark(seed=1, size=128,
                                          truth=TransformParams(0.9, 6.5, 12.5, 7.5))
    assert [r[0] for r in rows] == ["Scale", "Rotation", "X-translation", "Y-translation"]
    assert max(r[3] for r in rows) <= 10
    assert fit > 0.95


def test_targets():
    np.testing.assert_array_equal(pipeline.targets_for(["negative", "intermediate", "high"]),
                                  [0, 0.5, 1])


def test_subtraction_after_alignment_exposes_defects():
    spec = PhantomSpec(defect_count=2, defect_radius_range=(4, 4), defect_depth=0.8,
                       misalignment=TransformParams(1.02, 2.0, 2, 1), seed=3)
    case = generate_case(spec)
    (al,) = process_cases([case], PipelineConfig())
    for sub, d in zip(al.subtractions(), case.defect_masks):
        v = sub.values
        # defect pixels carry a clearly more negative signal than the rest of the lung
        assert v[d].mean() < -40
        assert GrayImage.clipped(-v).pixels[d].mean() > 3 * max(1.0, np.abs(v[~d]).mean())

import numpy as np
import pytest

from polsarseg.synth import (ClassModel, SceneSpec, default_class_bank,
                             generate_scene)


def scene(seed=0, **kw):
    args = dict(height=24, width=24, classes=default_class_bank(3), looks=4,
                layout="rectangles", rng_seed=seed)
    args.update(kw)
    return SceneSpec(**args)


class TestClassModel:
    def test_non_hermitian_rejected(self):
        sigma = np.eye(3, dtype=complex)
        sigma[0, 1] = 1j  # conjugate entry missing
        with pytest.raises(ValueError, match="Hermitian"):
            ClassModel("x", sigma)

    def test_indefinite_rejected(self):
        with pytest.raises(ValueError, match="PSD"):
            ClassModel("x", np.diag([1.0, -0.5, 1.0]).astype(complex))

    def test_span(self):
        cm = ClassModel("x", np.diag([1.0, 2.0, 3.0]).astype(complex))
        assert cm.span == pytest.approx(6.0)


class TestDefaultBank:
    def test_supported_range(self):
        for k in (2, 8):
            assert len(default_class_bank(k)) == k
        for k in (1, 9):
            with pytest.raises(ValueError, match="2..8"):
                default_class_bank(k)

    def test_spans_pairwise_distinct(self):
        spans = [cm.span for cm in default_class_bank(8)]
        assert len(set(np.round(spans, 9))) == 8

    def test_two_class_span_ratio(self):
        a, b = default_class_bank(2)
        hi, lo = max(a.span, b.span), min(a.span, b.span)
        assert hi / lo >= 2.0

    def test_no_pair_is_a_scalar_multiple(self):
        bank = default_class_bank(8)
        for i in range(8):
            for j in range(i + 1, 8):
                a, b = bank[i].sigma, bank[j].sigma
                s = np.vdot(b, a) / np.vdot(b, b)
                residual = np.linalg.norm(a - s * b) / np.linalg.norm(a)
                assert residual >= 0.1, (i, j, residual)

    def test_all_positive_semidefinite(self):
        for cm in default_class_bank(8):
            assert np.linalg.eigvalsh(cm.sigma).min() >= -1e-12 * cm.span


class TestSceneSpec:
    def test_needs_two_classes(self):
        with pytest.raises(ValueError, match="two classes"):
            scene(classes=default_class_bank(2)[:1])

    def test_rejects_bad_layout(self):
        with pytest.raises(ValueError, match="layout"):
            scene(layout="stripes")

    def test_voronoi_needs_sites(self):
        with pytest.raises(ValueError, match="site"):
            scene(layout="voronoi", voronoi_sites=2)

    def test_rejects_zero_looks(self):
        with pytest.raises(ValueError, match="looks"):
            scene(looks=0)


class TestGenerateScene:
    def test_deterministic_for_fixed_seed(self):
        img1, lab1 = generate_scene(scene(seed=42))
        img2, lab2 = generate_scene(scene(seed=42))
        assert np.array_equal(img1.planes, img2.planes)
        assert np.array_equal(lab1.labels, lab2.labels)

    def test_seed_changes_output(self):
        img1, _ = generate_scene(scene(seed=1))
        img2, _ = generate_scene(scene(seed=2))
        assert not np.array_equal(img1.planes, img2.planes)

    def test_rectangles_layout_bands(self):
        _, lab = generate_scene(scene())
        # class 1 on the left edge, last class on the right edge
        assert lab.labels[:, 0].tolist() == [1] * 24
        assert lab.labels[:, -1].tolist() == [3] * 24

    def test_voronoi_layout_covers_all_classes(self):
        _, lab = generate_scene(scene(layout="voronoi", voronoi_sites=9,
                                      height=48, width=48))
        present = np.unique(lab.labels)
        assert present.tolist() == [1, 2, 3]

    def test_sample_mean_converges_to_covariance(self):
        # many looks: the per-class average coherency approaches the model
        bank = default_class_bank(2)
        img, lab = generate_scene(scene(classes=bank, looks=64,
                                        height=32, width=32, seed=3))
        p = img.planes.astype(np.float64)
        for c, cm in enumerate(bank, start=1):
            sel = lab.labels == c
            t11 = p[0][sel].mean()
            t22 = p[1][sel].mean()
            t12 = p[3][sel].mean() + 1j * p[4][sel].mean()
            assert t11 == pytest.approx(cm.sigma[0, 0].real, rel=0.05)
            assert t22 == pytest.approx(cm.sigma[1, 1].real, rel=0.05)
            assert abs(t12 - cm.sigma[0, 1]) < 0.05 * cm.span

    def test_occupancy_floor_enforced(self):
        # 8 vertical bands cannot fit in 4 columns: some class gets nothing
        with pytest.raises(ValueError, match="occup|below"):
            generate_scene(scene(classes=default_class_bank(8),
                                 height=8, width=4))

    def test_output_passes_coherency_validation(self):
        img, _ = generate_scene(scene(looks=1))  # hardest case for minors
        assert img.planes.dtype == np.float32

import json
import math
import random

import numpy as np
import pytest

from irshape.approx import BasisKind
from irshape.bench import (
    GeneratorSpec,
    ShapeCorpus,
    coefficient_stats,
    evaluate_config,
    generate_synthetic,
    histogram_csv,
    ingest_polygons,
    read_csv,
    recon_error_sweep,
    sensitivity_csv,
    sensitivity_sweep,
    stats_csv,
    sweep_configs,
    sweep_csv,
)
from irshape.codec import decode_one, encode
from irshape.errors import IngestError
from irshape.geometry import iou, label_components, rasterize

from oracles import two_pass_mean_var


@pytest.fixture(scope="module")
def discs():
    return generate_synthetic("disc", 10, seed=5)


class TestSynthetic:
    def test_deterministic(self):
        a = generate_synthetic("all", 14, seed=3)
        b = generate_synthetic("all", 14, seed=3)
        assert a.ids == b.ids
        assert all(x.tobytes() == y.tobytes() for x, y in zip(a.masks, b.masks))
        c = generate_synthetic("all", 14, seed=4)
        assert any(x.tobytes() != y.tobytes() for x, y in zip(a.masks, c.masks))

    def test_prefix_stable(self):
        short, long = generate_synthetic("mixed", 5, 9), generate_synthetic("mixed", 12, 9)
        assert all(x.tobytes() == y.tobytes() for x, y in zip(short.masks, long.masks))

    def test_disc_only_matches_analytic(self, discs):
        assert len(discs) == 10
        yy, xx = np.mgrid[:64, :64] + 0.5
        for m, p in zip(discs.masks, discs.params):
            cx, cy = p["center"]
            analytic = (xx - cx) ** 2 + (yy - cy) ** 2 <= p["radius"] ** 2
            assert iou(m, analytic) >= 0.99

    def test_kinds_cycle(self):
        corpus = generate_synthetic("all", 7)
        assert [i.split("-")[0] for i in corpus.ids] == list(GeneratorSpec.parse("all").kinds)
        for m in corpus.masks:
            assert label_components(m)[1] == 1

    def test_bad_requests(self):
        with pytest.raises(ValueError):
            generate_synthetic("mixed", 0)
        with pytest.raises(ValueError):
            generate_synthetic("hexagon", 3)


def write_json(tmp_path, doc):
    p = tmp_path / "ann.json"
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return p


class TestIngest:
    def test_triangle(self, tmp_path):
        tri = [10, 10, 30, 12, 18, 28]
        corpus = ingest_polygons(write_json(tmp_path, {"annotations": [
            {"id": 7, "segmentation": [tri]}]}))
        assert corpus.ids == ["7"] and corpus.skipped == 0
        pts = np.array(tri, float).reshape(-1, 2) - [8, 8]
        h, w = corpus.masks[0].shape
        assert (w, h) == (24, 22)
        np.testing.assert_array_equal(corpus.masks[0], rasterize(pts, w, h))

    def test_two_parts_one_mask(self, tmp_path):
        seg = [[0, 0, 6, 0, 6, 6, 0, 6], [20, 0, 26, 0, 26, 6, 20, 6]]
        corpus = ingest_polygons(write_json(tmp_path, {"annotations": [
            {"id": 1, "segmentation": seg}]}))
        assert len(corpus) == 1
        assert label_components(corpus.masks[0])[1] == 2

    def test_degenerate_and_rle_skipped(self, tmp_path):
        corpus = ingest_polygons(write_json(tmp_path, {"annotations": [
            {"id": 1, "segmentation": [[0, 0, 5, 5, 10, 10]]},
            {"id": 2, "segmentation": {"counts": "abc", "size": [4, 4]}},
            {"id": 3, "segmentation": [[0, 0, 8, 0, 8, 8]]}]}))
        assert corpus.ids == ["3"] and corpus.skipped == 2

    def test_truncated_json(self, tmp_path):
        p = write_json(tmp_path, '{"annotations": [\n {"id": 1, "segmentation": [[0, 0, 4')
        with pytest.raises(IngestError, match=r"ann\.json:2:\d+"):
            ingest_polygons(p)

    def test_bad_field_context(self, tmp_path):
        p = write_json(tmp_path, {"annotations": [{"id": 1, "segmentation": [[0, 0, "x", 1]]}]})
        with pytest.raises(IngestError, match=r"annotations\[0\]\.segmentation\[0\]"):
            ingest_polygons(p)


class TestSweep:
    def test_disc_ir_cheby(self, discs):
        (row,) = recon_error_sweep(discs, ["IR"], [8], basis="cheby")
        assert row.e_recon <= 0.05 and row.failed == 0

    def test_empty_dims(self, discs):
        assert recon_error_sweep(discs, ["IR", "XY"], []) == []

    def test_configs(self):
        cfgs = sweep_configs(["IR", "XY"], [8, 20], None, 360)
        assert [(c["signature"], c["dim"], c["N"]) for c in cfgs] == [
            ("IR", 8, 8), ("XY", 8, 4), ("IR", 20, 20), ("XY", 20, 10)]
        with pytest.raises(ValueError):
            sweep_configs(["XY"], [7], None, 360)

    def test_e_recon_is_one_minus_mean_iou(self):
        corpus = generate_synthetic("mixed", 6, seed=2)
        cfg = sweep_configs(["IR"], [12], "cheby", 360)[0]
        rep = evaluate_config(corpus, cfg)
        manual = []
        for m in corpus.masks:
            h, w = m.shape
            manual.append(iou(rasterize(decode_one(encode(m, "cheby", 12), 360), w, h), m))
        assert abs(rep.e_recon - (1 - sum(manual) / len(manual))) <= 1e-12

    def test_threads_do_not_change_result(self):
        corpus = generate_synthetic("mixed", 8, seed=1)
        a = recon_error_sweep(corpus, ["IR", "XY"], [10], basis="cheby", threads=1)
        b = recon_error_sweep(corpus, ["IR", "XY"], [10], basis="cheby", threads=4)
        assert sweep_csv(a) == sweep_csv(b)

    def test_csv_roundtrip(self, discs):
        rows = recon_error_sweep(discs, ["IR"], [8, 12], basis="cheby")
        back = read_csv(sweep_csv(rows))
        assert [float(r["E_recon"]) for r in back] == [r.e_recon for r in rows]
        assert list(back[0]) == ["signature", "basis", "dim", "N", "E_recon", "shapes", "failed"]


class TestSensitivity:
    def test_alpha_zero(self, discs):
        rep = sensitivity_sweep(discs, "cheby", 4, alphas=[0.0, 0.2], trials=3)
        assert (rep.delta[:, 0] == 0).all()
        assert rep.delta_for("c0", 0.2) > 0

    def test_deterministic(self, discs):
        a = sensitivity_sweep(discs, "cheby", 4, alphas=[0.1], trials=3, seed=7)
        b = sensitivity_sweep(discs, "cheby", 4, alphas=[0.1], trials=3, seed=7, threads=3)
        assert sensitivity_csv(a) == sensitivity_csv(b)

    def test_fixed_fourier_omega_not_perturbed(self, discs):
        rep = sensitivity_sweep(discs, "fourier-fixed", 4, alphas=[0.1], trials=2)
        assert rep.names == ["a0", "a1", "b1"]

    def test_zero_mean_flagged(self):
        m = np.zeros((64, 64), bool)
        m[16:48, 16:48] = True
        corpus = ShapeCorpus(["sq"], [m], "test")
        rep = sensitivity_sweep(corpus, "fourier-fixed", 4, alphas=[0.1], trials=2)
        # a square's series has no first harmonic
        flagged_names = [rep.names[rep.indices.index(i)] for i in rep.flagged]
        assert set(flagged_names) <= {"a1", "b1"}

    @pytest.mark.parametrize("delta", [1.0, 2.0, 4.0])
    def test_disc_c0_annulus_ratio(self, delta):
        r = 20.0
        yy, xx = np.mgrid[:64, :64] + 0.5
        m = (xx - 32) ** 2 + (yy - 32) ** 2 <= r * r
        sv = encode(m, "cheby", 8)
        grown = type(sv)(sv.center, sv.coeffs.with_coefficient(0, sv.coeffs.coeffs[0] + delta))
        got = iou(rasterize(decode_one(grown), 64, 64), m)
        assert abs(got - (r / (r + delta)) ** 2) <= 0.03


class TestStats:
    def test_disc_corpus(self, discs):
        st = coefficient_stats(discs, "cheby", 8)
        radii = [p["radius"] for p in discs.params]
        assert abs(st.mean[0] - np.mean(radii)) <= 0.5
        assert st.variance[1:].max() <= 0.1

    def test_matches_two_pass_oracle(self):
        corpus = generate_synthetic("mixed", 12, seed=3)
        st = coefficient_stats(corpus, "cheby", 6)
        C = np.stack([encode(m, "cheby", 6).coeffs.coeffs for m in corpus.masks])
        for i in range(6):
            mean, var = two_pass_mean_var(C[:, i])
            assert abs(st.mean[i] - mean) <= 1e-12 * max(1, abs(mean))
            assert abs(st.variance[i] - var) <= 1e-12 * max(1, var)

    def test_permutation_invariant(self):
        corpus = generate_synthetic("mixed", 12, seed=3)
        order = list(range(12))
        random.Random(0).shuffle(order)
        shuffled = ShapeCorpus([corpus.ids[i] for i in order],
                               [corpus.masks[i] for i in order], "shuffled")
        a, b = coefficient_stats(corpus, "cheby", 6), coefficient_stats(shuffled, "cheby", 6)
        assert stats_csv(a) == stats_csv(b)
        assert histogram_csv(a) == histogram_csv(b)

    def test_csv_exact_roundtrip(self, discs):
        st = coefficient_stats(discs, "cheby", 5, bins=4)
        rows = read_csv(stats_csv(st))
        assert [float(r["mean"]) for r in rows[:-1]] == st.mean.tolist()
        assert rows[-1]["index"] == "all"
        hist = read_csv(histogram_csv(st))
        assert len(hist) == 5 * 4
        assert sum(int(r["count"]) for r in hist if r["index"] == "0") == len(discs)

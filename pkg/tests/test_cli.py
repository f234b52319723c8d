import json

import numpy as np
import pytest

from exemplarcount import save_feature_map
from exemplarcount.cli import main

from conftest import make_planted_map, random_feature_map


@pytest.fixture
def planted_scene(rng, tmp_path):
    fmap, exemplar = make_planted_map(rng, 5)
    path = tmp_path / "scene.cdfm"
    save_feature_map(fmap, path)
    boxes = f"{exemplar.x1},{exemplar.y1},{exemplar.x2},{exemplar.y2}"
    return path, boxes, exemplar


def run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestCount:
    def test_prints_count(self, planted_scene, capsys):
        path, boxes, _ = planted_scene
        code, out, _ = run(capsys, ["count", "--features", str(path),
                                    "--boxes", boxes, "--k", "0"])
        assert code == 0
        assert abs(float(out.strip()) - 5.0) <= 0.5

    def test_json_output_schema(self, planted_scene, capsys):
        path, boxes, _ = planted_scene
        code, out, _ = run(capsys, ["count", "--features", str(path),
                                    "--boxes", boxes, "--k", "0", "--json"])
        assert code == 0
        payload = json.loads(out)
        assert set(payload) == {"image_id", "count", "raw_count", "z", "tau",
                                "n_exemplars", "patch_boxes", "degenerate"}
        assert payload["n_exemplars"] == 1
        assert 4.5 <= payload["count"] <= 5.5

    def test_no_threshold_flag(self, planted_scene, capsys):
        path, boxes, _ = planted_scene
        _, out_on, _ = run(capsys, ["count", "--features", str(path),
                                    "--boxes", boxes, "--k", "0", "--json"])
        _, out_off, _ = run(capsys, ["count", "--features", str(path),
                                     "--boxes", boxes, "--k", "0",
                                     "--no-threshold", "--json"])
        on, off = json.loads(out_on), json.loads(out_off)
        assert off["count"] == pytest.approx(off["raw_count"])
        assert off["count"] >= on["count"]

    def test_boxes_file(self, planted_scene, tmp_path, capsys):
        path, _, exemplar = planted_scene
        boxes_file = tmp_path / "boxes.json"
        boxes_file.write_text(json.dumps(
            [[exemplar.x1, exemplar.y1, exemplar.x2, exemplar.y2]]
        ))
        code, out, _ = run(capsys, ["count", "--features", str(path),
                                    "--boxes-file", str(boxes_file), "--k", "0"])
        assert code == 0

    def test_both_box_flags_is_usage_error(self, planted_scene, tmp_path):
        path, boxes, _ = planted_scene
        boxes_file = tmp_path / "boxes.json"
        boxes_file.write_text("[[0,0,5,5]]")
        with pytest.raises(SystemExit) as err:
            main(["count", "--features", str(path), "--boxes", boxes,
                  "--boxes-file", str(boxes_file)])
        assert err.value.code == 2

    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as err:
            main(["count", "--whatever"])
        assert err.value.code == 2

    def test_missing_file_is_runtime_error(self, capsys):
        code, _, err = run(capsys, ["count", "--features", "/nope.cdfm",
                                    "--boxes", "0,0,5,5"])
        assert code == 1
        assert "error" in err

    def test_level_mismatch_reported(self, planted_scene, capsys):
        path, boxes, _ = planted_scene
        code, _, err = run(capsys, ["count", "--features", str(path),
                                    "--boxes", boxes, "--k", "2"])
        assert code == 1
        assert "--k 0" in err


class TestInspect:
    def test_json_header(self, rng, tmp_path, capsys):
        fmap = random_feature_map(rng, rows=2, cols=3, channels=4, patch_size=14)
        path = tmp_path / "map.cdfm"
        save_feature_map(fmap, path)
        code, out, _ = run(capsys, ["inspect", "--features", str(path), "--json"])
        assert code == 0
        info = json.loads(out)
        assert (info["rows"], info["cols"], info["channels"]) == (2, 3, 4)
        assert info["patch_size"] == 14


class TestEval:
    def build_dataset(self, rng, tmp_path, counts):
        features = tmp_path / "features"
        features.mkdir()
        ann = {}
        names = []
        for i, k in enumerate(counts):
            fmap, exemplar = make_planted_map(rng, k)
            name = f"img{i}.jpg"
            names.append(name)
            save_feature_map(fmap, features / f"img{i}.cdfm")
            corner = [
                [exemplar.x1, exemplar.y1], [exemplar.x2, exemplar.y1],
                [exemplar.x2, exemplar.y2], [exemplar.x1, exemplar.y2],
            ]
            ann[name] = {
                "box_examples_coordinates": [corner],
                "points": [[0.0, 0.0]] * k,
            }
        ann_path = tmp_path / "annotation.json"
        ann_path.write_text(json.dumps(ann))
        splits_path = tmp_path / "splits.json"
        splits_path.write_text(json.dumps({"test": names}))
        return features, ann_path, splits_path

    def test_eval_fsc_layout(self, rng, tmp_path, capsys):
        features, ann, splits = self.build_dataset(rng, tmp_path, [3, 6, 10])
        code, out, _ = run(capsys, [
            "eval", "--dataset", "fsc147", "--split", "test",
            "--features-dir", str(features), "--ann", str(ann),
            "--splits", str(splits), "--k", "0", "--jobs", "2",
        ])
        assert code == 0
        report = json.loads(out)
        assert report["split"] == "test"
        assert report["n_images"] == 3
        assert report["mae"] <= report["rmse"]
        assert report["mae"] < 1.0
        assert report["config"]["resolution_level"] == 0

    def test_eval_exit_one_on_failures(self, rng, tmp_path, capsys):
        features, ann, splits = self.build_dataset(rng, tmp_path, [3, 6])
        payload = json.loads(ann.read_text())
        payload["ghost.jpg"] = payload["img0.jpg"]
        ann.write_text(json.dumps(payload))
        names = json.loads(splits.read_text())
        names["test"].append("ghost.jpg")
        splits.write_text(json.dumps(names))
        code, out, _ = run(capsys, [
            "eval", "--dataset", "fsc147", "--split", "test",
            "--features-dir", str(features), "--ann", str(ann),
            "--splits", str(splits), "--k", "0",
        ])
        assert code == 1
        report = json.loads(out)
        assert len(report["failures"]) == 1
        assert report["n_images"] == len(report["per_image"]) + len(report["failures"])

    def test_report_written_to_out(self, rng, tmp_path, capsys):
        features, ann, splits = self.build_dataset(rng, tmp_path, [4])
        out_file = tmp_path / "report.json"
        code, out, _ = run(capsys, [
            "eval", "--dataset", "fsc147", "--split", "test",
            "--features-dir", str(features), "--ann", str(ann),
            "--splits", str(splits), "--k", "0", "--out", str(out_file),
        ])
        assert code == 0
        assert json.loads(out_file.read_text()) == json.loads(out)


class TestBaseline:
    def test_counts_filtered_detections(self, rng, tmp_path, capsys):
        import numpy as np
        from exemplarcount import FeatureMap

        p = 14
        data = np.zeros((4, 4, 4), dtype=np.float32)
        data[0, 0] = [1, 0, 0, 0]
        data[1, 1] = [0.6, 0.8, 0, 0]
        data[2, 2] = [0.4, np.sqrt(1 - 0.16), 0, 0]
        data[3, 3] = [0.9, np.sqrt(1 - 0.81), 0, 0]
        fmap = FeatureMap.from_grid(data, p)
        path = tmp_path / "scene.cdfm"
        save_feature_map(fmap, path)
        detections = {
            "scene": [
                [p, p, 2 * p, 2 * p],
                [2 * p, 2 * p, 3 * p, 3 * p],
                [3 * p, 3 * p, 4 * p, 4 * p],
            ]
        }
        det_path = tmp_path / "det.json"
        det_path.write_text(json.dumps(detections))
        code, out, _ = run(capsys, [
            "baseline", "--features", str(path), "--boxes", f"0,0,{p},{p}",
            "--detections", str(det_path), "--threshold", "0.5",
        ])
        assert code == 0
        assert out.strip() == "2"


class TestExportDensity:
    def test_writes_all_variants(self, planted_scene, tmp_path, capsys):
        path, boxes, _ = planted_scene
        out_dir = tmp_path / "exports"
        code, out, err = run(capsys, [
            "export-density", "--features", str(path), "--boxes", boxes,
            "--k", "0", "--out", str(out_dir),
        ])
        assert code == 0
        names = sorted(p.name for p in out_dir.iterdir())
        assert names == ["scene.csv", "scene.png", "scene_prethreshold.csv",
                         "scene_prethreshold.png"]
        grid = np.loadtxt(out_dir / "scene.csv", delimiter=",")
        assert grid.sum() == pytest.approx(float(out.strip()), abs=0.1)

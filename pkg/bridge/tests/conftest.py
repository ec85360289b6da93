import json

import numpy as np
import pytest
import torch
from PIL import Image
from torchvision.models.detection import FasterRCNN
from torchvision.models.detection.anchor_utils import AnchorGenerator
from torchvision.ops import MultiScaleRoIAlign


def _tiny_detector(num_classes: int = 3, seed: int = 0) -> FasterRCNN:
    """Full two-stage detector with a 2-conv backbone; sub-second on CPU."""
    torch.manual_seed(seed)
    backbone = torch.nn.Sequential(
        torch.nn.Conv2d(3, 8, 3, stride=2, padding=1), torch.nn.ReLU(),
        torch.nn.Conv2d(8, 16, 3, stride=2, padding=1), torch.nn.ReLU())
    backbone.out_channels = 16
    return FasterRCNN(
        backbone, num_classes=num_classes,
        rpn_anchor_generator=AnchorGenerator(sizes=((16, 32),),
                                             aspect_ratios=((0.5, 1.0, 2.0),)),
        box_roi_pool=MultiScaleRoIAlign(featmap_names=["0"], output_size=7,
                                        sampling_ratio=2),
        min_size=64, max_size=96, box_score_thresh=0.001)


@pytest.fixture(scope="session")
def make_detector():
    return _tiny_detector


@pytest.fixture()
def tiny_detector():
    return _tiny_detector()


def _write_png(path, seed, size=(64, 48)):
    rng = np.random.default_rng(seed)
    w, h = size
    ramp = np.linspace(40, 200, w, dtype=np.float32)[None, :, None]
    img = ramp + rng.normal(scale=25.0, size=(h, w, 3)).astype(np.float32)
    Image.fromarray(np.clip(img, 0, 255).astype(np.uint8), "RGB").save(path)


@pytest.fixture()
def image_dir(tmp_path):
    """Two images whose stems exercise both fallback id rules, plus junk."""
    root = tmp_path / "images"
    root.mkdir()
    _write_png(root / "000007.png", seed=1)
    _write_png(root / "frame_b.png", seed=2)
    (root / "notes.txt").write_text("not an image")
    return root


@pytest.fixture()
def coco_ann(tmp_path):
    path = tmp_path / "ann.json"
    path.write_text(json.dumps({
        "images": [{"id": 31, "file_name": "000007.png", "width": 64, "height": 48},
                   {"id": 32, "file_name": "frame_b.png", "width": 64, "height": 48}],
        "annotations": [], "categories": [{"id": 1, "name": "person"}]}))
    return path


@pytest.fixture()
def bench_tree(tmp_path):
    """Hand-built benchmark tree matching the documented manifest schema."""
    bench = tmp_path / "bench"
    entries = [{"image_id": 1, "source_file": "a.png", "width": 64, "height": 48},
               {"image_id": 2, "source_file": "b.png", "width": 64, "height": 48}]
    products = [{"kind": "fog", "severity": 1, "dir": "fog/severity_1",
                 "encoding": "png", "geometry_approximate": False},
                {"kind": "contrast", "severity": 2, "dir": "contrast/severity_2",
                 "encoding": "png", "geometry_approximate": False}]
    for product in products:
        product_dir = bench / product["dir"]
        product_dir.mkdir(parents=True)
        for index, entry in enumerate(entries):
            _write_png(product_dir / entry["source_file"],
                       seed=100 + index + product["severity"])
    (bench / "manifest.json").write_text(json.dumps({
        "schema_version": 1, "dataset_name": "demo", "split": "test",
        "global_seed": 1234, "tool_version": "0.1.0", "schedule_digest": "x",
        "severity_cap": 5, "entries": entries, "products": products,
        "annotations_ref": "annotations.json", "warnings": []}))
    return bench

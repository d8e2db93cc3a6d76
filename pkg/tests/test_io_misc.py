import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from densecorr.imaging import crop_to_box, read_image, to_gray, write_png
from densecorr.keypoints import (
    AnnotationFormatError,
    Keypoint,
    KeypointSet,
    format_annotations,
    parse_annotations,
    read_annotations,
    write_annotations,
)
from densecorr.manifest import ManifestError, load_manifest, write_manifest

coord = st.floats(-1e4, 1e4, allow_nan=False)
name = st.text("abcdefghij_", min_size=1, max_size=6)


@given(st.dictionaries(name, st.tuples(coord, coord, st.booleans()), max_size=5),
       st.floats(1, 1e3), st.floats(1, 1e3))
@settings(max_examples=50)
def test_annotation_round_trip(points, w, h):
    pts = {n: (x, y, v) if v else (float("nan"), float("nan"), False) for n, (x, y, v) in points.items()}
    rec = KeypointSet("img,1", (1.5, 2.0, w, h), pts)
    parsed = parse_annotations(format_annotations([rec]))
    back = parsed["img,1"]
    assert back.bbox == rec.bbox
    for n, kp in rec.points.items():
        assert back.points[n].visible == kp.visible
        if kp.visible:
            assert (back.points[n].x, back.points[n].y) == (kp.x, kp.y)


def test_annotation_errors(tmp_path):
    with pytest.raises(AnnotationFormatError):
        parse_annotations("a,0,0,1,1\n")
    with pytest.raises(AnnotationFormatError):
        parse_annotations("")
    hdr = "image_id,bbox_x,bbox_y,bbox_w,bbox_h,keypoints\n"
    with pytest.raises(AnnotationFormatError):
        parse_annotations(hdr + "a,0,0,1,1,p,1,2\n")
    with pytest.raises(AnnotationFormatError):
        parse_annotations(hdr + "a,0,0,1,1\na,0,0,1,1\n")
    with pytest.raises(AnnotationFormatError):
        parse_annotations(hdr + "a,0,0,0,1\n")
    with pytest.raises(AnnotationFormatError):
        parse_annotations(hdr + "a,0,0,1,1,p,nan,2,1\n")
    write_annotations(tmp_path / "a.csv", [KeypointSet("z", (0, 0, 1, 1), {})])
    assert list(read_annotations(tmp_path / "a.csv")) == ["z"]


def test_keypoint_set_validation_and_box_frame():
    with pytest.raises(ValueError):
        Keypoint(float("nan"), 1.0, True)
    with pytest.raises(ValueError):
        KeypointSet("a", (0, 0, -1, 1))
    ks = KeypointSet("a", (10, 20, 200, 100), {"p": (60, 70, True)})
    boxed = ks.to_box_frame(500)
    assert (boxed.points["p"].x, boxed.points["p"].y) == (125.0, 250.0)
    assert boxed.from_box_frame(ks.bbox, 500) == ks
    assert ks.names == ["p"] and list(ks.visible()) == ["p"]


def test_png_round_trip_and_gray(tmp_path):
    rgb = np.random.default_rng(0).integers(0, 256, (5, 7, 3)).astype(np.uint8)
    write_png(tmp_path / "c.png", rgb)
    assert np.array_equal(read_image(tmp_path / "c.png"), rgb)
    gray = rgb[..., 0]
    write_png(tmp_path / "g.png", gray)
    assert np.array_equal(read_image(tmp_path / "g.png"), gray)
    assert to_gray(np.full((1, 1, 3), [100, 100, 100]))[0, 0] == pytest.approx(100)
    assert to_gray(np.array([[[255, 0, 0]]]))[0, 0] == pytest.approx(0.299 * 255)


def test_crop_to_box():
    img = np.arange(100, dtype=np.uint8).reshape(10, 10)
    out = crop_to_box(img, (2, 3, 4, 4), 4)
    assert np.array_equal(out, img[3:7, 2:6])
    up = crop_to_box(img, (0, 0, 10, 10), 20)
    assert up.shape == (20, 20)
    edge = crop_to_box(img, (-2, -2, 4, 4), 4)
    assert edge[0, 0] == img[0, 0]


def _manifest_text(rows):
    hdr = "image_id\timage\tgrids\tglobal\tannotation\tcategory\tsplit\n"
    return hdr + "".join("\t".join(r) + "\n" for r in rows)


def test_manifest_load_and_write(tmp_path):
    (tmp_path / "a.png").write_bytes(b"")
    (tmp_path / "a.g").write_bytes(b"")
    (tmp_path / "m.tsv").write_text(_manifest_text([["a", "a.png", "conv4=a.g", "", "", "cat", "train"]]))
    m = load_manifest(tmp_path / "m.tsv")
    rec = m["a"]
    assert rec.grids == {"conv4": tmp_path / "a.g"} and rec.split == "train"
    assert m.layers() == {"conv4"} and len(m.select(split="val")) == 0
    write_manifest(tmp_path / "m2.tsv", m)
    assert load_manifest(tmp_path / "m2.tsv")["a"] == rec
    with pytest.raises(KeyError):
        m["zz"]
    with pytest.raises(ManifestError):
        m.keypoints("a")


def test_manifest_errors(tmp_path):
    p = tmp_path / "m.tsv"
    p.write_text("wrong\theader\n")
    with pytest.raises(ManifestError):
        load_manifest(p)
    p.write_text(_manifest_text([["a", "missing.png", "", "", "", "", ""]]))
    with pytest.raises(ManifestError):
        load_manifest(p)
    p.write_text(_manifest_text([["a", "", "", "", "", "", ""], ["a", "", "", "", "", "", ""]]))
    with pytest.raises(ManifestError):
        load_manifest(p)
    p.write_text(_manifest_text([["a", "", "conv4", "", "", "", ""]]))
    with pytest.raises(ManifestError):
        load_manifest(p)

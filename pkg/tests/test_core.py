import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vitalscan.core import (
    VITAL_LABELS,
    BinaryMask,
    BoundingBox,
    Detection,
    ExtractionResult,
    ImageBuffer,
    Point2D,
    ScreenQuad,
    StageTimings,
    UnknownLabel,
    VitalLabel,
    VitalRecord,
    label_format,
    label_parse,
    result_from_json,
    result_to_json,
)


class TestLabels:
    def test_parse_known_spellings(self):
        assert label_parse("SpO2") is VitalLabel.SPO2
        assert label_parse("hr") is VitalLabel.HR
        assert label_parse("Screen") is VitalLabel.SCREEN
        assert label_parse(" temp ") is VitalLabel.TEMP

    def test_parse_unknown_raises(self):
        with pytest.raises(UnknownLabel):
            label_parse("ECG")

    def test_round_trip_parse_format(self):
        for label in VitalLabel:
            assert label_parse(label_format(label)) is label

    def test_vital_labels_excludes_screen(self):
        assert len(VITAL_LABELS) == 8
        assert VitalLabel.SCREEN not in VITAL_LABELS
        assert all(l.is_vital for l in VITAL_LABELS)


class TestImageBuffer:
    def test_rejects_bad_shapes(self):
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((0, 4, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            ImageBuffer(np.zeros((4, 4, 3), dtype=np.float32))

    def test_immutable_after_construction(self):
        img = ImageBuffer.zeros(4, 3)
        with pytest.raises(ValueError):
            img.pixels[0, 0, 0] = 1

    def test_dimensions(self):
        img = ImageBuffer.zeros(7, 5)
        assert (img.width, img.height, img.channels) == (7, 5, 3)

    def test_equality_is_content_based(self):
        a = ImageBuffer.zeros(3, 3)
        b = ImageBuffer.zeros(3, 3)
        assert a == b
        arr = np.zeros((3, 3, 3), dtype=np.uint8)
        arr[0, 0] = 9
        assert a != ImageBuffer(arr)


class TestMaskAndBoxes:
    def test_mask_matches(self):
        m = BinaryMask(np.zeros((5, 7), dtype=bool))
        assert m.matches(ImageBuffer.zeros(7, 5))
        assert not m.matches(ImageBuffer.zeros(5, 7))

    def test_box_invariants(self):
        b = BoundingBox(1, 2, 4, 6)
        assert (b.width, b.height, b.area) == (3, 4, 12)
        with pytest.raises(ValueError):
            BoundingBox(4, 0, 4, 5)
        with pytest.raises(ValueError):
            BoundingBox(-1, 0, 4, 5)

    def test_detection_rejects_screen_label(self):
        with pytest.raises(ValueError):
            Detection(VitalLabel.SCREEN, BoundingBox(0, 0, 1, 1), 0.9)

    def test_confidence_bounds(self):
        with pytest.raises(ValueError):
            Detection(VitalLabel.HR, BoundingBox(0, 0, 1, 1), 1.5)


class TestQuad:
    def test_valid_quad(self):
        q = ScreenQuad.from_array([[0, 0], [9, 0], [9, 9], [0, 9]])
        assert q.area == pytest.approx(81.0)

    def test_rejects_self_intersection(self):
        with pytest.raises(ValueError):
            ScreenQuad.from_array([[0, 0], [9, 9], [9, 0], [0, 9]])

    def test_rejects_wrong_orientation(self):
        # counter-clockwise on screen = negative shoelace
        with pytest.raises(ValueError):
            ScreenQuad.from_array([[0, 0], [0, 9], [9, 9], [9, 0]])

    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            ScreenQuad.from_array([[0, 0], [0, 0], [9, 9], [0, 9]])


class TestStageTimings:
    def test_sum_invariant(self):
        t = StageTimings.of(1.0, 2.0, 3.0, 0.5)
        assert t.total_ms == pytest.approx(6.5)
        with pytest.raises(ValueError):
            StageTimings(1.0, 2.0, 3.0, 0.5, 7.0)

    def test_within_tolerance_accepted(self):
        StageTimings(1.0, 2.0, 3.0, 0.5, 6.55)  # 0.05 ms off is fine

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            StageTimings.of(-1.0, 0.0, 0.0, 0.0)


def _record(label, value, conf, box=(0, 0, 10, 10)):
    return VitalRecord(label=label, value=value, confidence=conf, box=BoundingBox(*box))


class TestExtractionResult:
    def test_screenless_result_cannot_carry_vitals(self):
        with pytest.raises(ValueError):
            ExtractionResult(
                source_id="x",
                screen=None,
                vitals={VitalLabel.HR: (_record(VitalLabel.HR, "72", 0.9),)},
                timings=StageTimings.zero(),
            )

    def test_empty_result_serializes_with_null_screen(self):
        r = ExtractionResult.empty("img1", StageTimings.zero())
        text = result_to_json(r)
        assert '"screen":null' in text
        assert '"vitals":{}' in text

    def test_single_record_serialization(self):
        quad = ScreenQuad.from_array([[0, 0], [639, 0], [639, 479], [0, 479]])
        r = ExtractionResult(
            source_id="img2",
            screen=(quad, 0.9),
            vitals={VitalLabel.HR: (_record(VitalLabel.HR, "120", 0.97),)},
            timings=StageTimings.zero(),
        )
        text = result_to_json(r)
        assert '"HR":[{"bbox":[0,0,10,10],"conf":0.97,"value":"120"}]' in text

    def test_serialization_is_deterministic(self):
        quad = ScreenQuad.from_array([[0, 0], [639, 0], [639, 479], [0, 479]])
        r = ExtractionResult(
            source_id="img3",
            screen=(quad, 0.5),
            vitals={VitalLabel.RR: (_record(VitalLabel.RR, "18", 0.8),)},
            timings=StageTimings.of(1.25, 2.5, 3.125, 0.0625),
        )
        assert result_to_json(r) == result_to_json(r)

    def test_vitals_emitted_in_reporting_order(self):
        quad = ScreenQuad.from_array([[0, 0], [639, 0], [639, 479], [0, 479]])
        r = ExtractionResult(
            source_id="x",
            screen=(quad, 0.9),
            vitals={
                VitalLabel.TEMP: (_record(VitalLabel.TEMP, "37.0", 0.9),),
                VitalLabel.HR: (_record(VitalLabel.HR, "72", 0.9),),
            },
            timings=StageTimings.zero(),
        )
        doc = json.loads(result_to_json(r))
        assert list(doc["vitals"]) == ["HR", "TEMP"]

    def test_best_picks_highest_confidence(self):
        quad = ScreenQuad.from_array([[0, 0], [639, 0], [639, 479], [0, 479]])
        r = ExtractionResult(
            source_id="x",
            screen=(quad, 0.9),
            vitals={
                VitalLabel.HR: (
                    _record(VitalLabel.HR, "72", 0.7),
                    _record(VitalLabel.HR, "73", 0.95),
                )
            },
            timings=StageTimings.zero(),
        )
        assert r.best(VitalLabel.HR).value == "73"
        assert r.best(VitalLabel.RR) is None


_conf = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)
_coords = st.tuples(
    st.integers(0, 500), st.integers(0, 400), st.integers(1, 100), st.integers(1, 60)
)


@st.composite
def _results(draw):
    labels = draw(st.lists(st.sampled_from(VITAL_LABELS), max_size=4, unique=True))
    vitals = {}
    for label in labels:
        records = []
        for _ in range(draw(st.integers(1, 3))):
            x, y, w, h = draw(_coords)
            value = str(draw(st.integers(0, 400)))
            records.append(
                VitalRecord(
                    label=label,
                    value=value,
                    confidence=draw(_conf),
                    box=BoundingBox(x, y, x + w, y + h),
                )
            )
        vitals[label] = tuple(records)
    corners = [[10.5, 20.25], [600.0, 30.0], [610.125, 470.5], [5.0, 460.0]]
    screen = (ScreenQuad.from_array(corners), draw(_conf))
    timings = StageTimings.of(
        draw(st.floats(0, 100)), draw(st.floats(0, 100)), draw(st.floats(0, 100)), draw(st.floats(0, 100))
    )
    return ExtractionResult(
        source_id=draw(st.text(alphabet="abc0123456789_", max_size=12)),
        screen=screen if (vitals or draw(st.booleans())) else None,
        vitals=vitals,
        timings=timings,
    )


@settings(max_examples=200, deadline=None)
@given(_results())
def test_result_json_round_trip(result):
    assert result_from_json(result_to_json(result)) == result


def test_result_from_json_rejects_garbage():
    with pytest.raises(ValueError):
        result_from_json("not json")
    with pytest.raises(ValueError):
        result_from_json('{"screen": null}')

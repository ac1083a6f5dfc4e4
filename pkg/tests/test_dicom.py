import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cxrtriage import dicom
from cxrtriage.rng import Xorshift64Star


def seeded_uid(seed=1):
    rng = Xorshift64Star(seed)
    return lambda: dicom.new_uid(lambda bits: rng.next_u64() << 64 | rng.next_u64())


def minimal_object():
    return dicom.DicomObject(
        meta=dicom.file_meta_for("1.2.840.10008.5.1.4.1.1.1", "2.25.42"),
        dataset=[
            dicom.element_text(dicom.SOP_CLASS_UID, "UI", "1.2.840.10008.5.1.4.1.1.1"),
            dicom.element_text(dicom.SOP_INSTANCE_UID, "UI", "2.25.42"),
        ],
    )


class TestParse:
    def test_minimal_file_roundtrip(self):
        obj = minimal_object()
        parsed = dicom.parse_part10(dicom.serialize_part10(obj))
        assert len(parsed.dataset) == 2
        assert parsed.dataset == obj.dataset
        assert parsed.meta == obj.meta

    def test_short_input_is_missing_magic(self):
        with pytest.raises(dicom.MissingMagic):
            dicom.parse_part10(b"\x00" * 131)

    def test_wrong_marker_is_missing_magic(self):
        with pytest.raises(dicom.MissingMagic):
            dicom.parse_part10(b"\x00" * 128 + b"DCIM" + b"\x00" * 20)

    def test_jpeg_transfer_syntax_rejected(self, testdata):
        data = (testdata / "dicom" / "err_jpeg_syntax.dcm").read_bytes()
        with pytest.raises(dicom.UnsupportedTransferSyntax):
            dicom.parse_part10(data)

    def test_truncated_element(self):
        data = dicom.serialize_part10(minimal_object())
        with pytest.raises(dicom.TruncatedElement):
            dicom.parse_part10(data[:-4])

    def test_odd_declared_length(self):
        data = dicom.serialize_part10(minimal_object())
        head = (0x0018).to_bytes(2, "little") + (0x0015).to_bytes(2, "little")
        data += head + b"CS" + (3).to_bytes(2, "little") + b"CHT"
        with pytest.raises(dicom.OddLength):
            dicom.parse_part10(data)

    def test_out_of_order_tags_rejected(self):
        obj = minimal_object()
        obj.dataset = obj.dataset[::-1]
        raw = bytearray(b"\x00" * 128 + b"DICM")
        for el in obj.meta + obj.dataset:
            raw += dicom._encode_element(el)
        with pytest.raises(dicom.OutOfOrderTag):
            dicom.parse_part10(bytes(raw))

    def test_duplicate_tags_rejected(self):
        obj = minimal_object()
        raw = bytearray(b"\x00" * 128 + b"DICM")
        for el in obj.meta + obj.dataset + [obj.dataset[-1]]:
            raw += dicom._encode_element(el)
        with pytest.raises(dicom.OutOfOrderTag):
            dicom.parse_part10(bytes(raw))

    def test_unknown_tag_preserved_verbatim(self):
        obj = minimal_object()
        private = dicom.element_bytes(dicom.Tag(0x0033, 0x1001), "OB", b"\x01\x02\x03\x04")
        obj.dataset.append(private)
        parsed = dicom.parse_part10(dicom.serialize_part10(obj))
        assert parsed.find(dicom.Tag(0x0033, 0x1001)).value == b"\x01\x02\x03\x04"


class TestSerialize:
    def test_missing_uids_rejected(self):
        obj = dicom.DicomObject(meta=dicom.file_meta_for("1.2", "2.25.1"), dataset=[])
        with pytest.raises(dicom.InvariantViolation):
            dicom.serialize_part10(obj)

    def test_odd_string_padded_with_space(self):
        obj = minimal_object()
        odd = dicom.DataElement(dicom.Tag(0x0008, 0x0080), "LO", b"ODD")
        obj.dataset = sorted(obj.dataset + [odd], key=lambda el: el.tag)
        data = dicom.serialize_part10(obj)
        parsed = dicom.parse_part10(data)
        assert parsed.find(dicom.Tag(0x0008, 0x0080)).value == b"ODD "

    def test_odd_uid_padded_with_nul(self):
        el = dicom.element_text(dicom.SOP_INSTANCE_UID, "UI", "2.25.4211")
        assert el.value == b"2.25.4211\x00"

    def test_all_value_lengths_even(self, testdata):
        for path in (testdata / "dicom").glob("*.dcm"):
            if path.name.startswith("err_"):
                continue
            parsed = dicom.parse_part10(path.read_bytes())
            for el in parsed.meta + parsed.dataset:
                assert len(el.value) % 2 == 0, f"{path.name} {el.tag}"

    def test_golden_corpus_byte_identity(self, testdata):
        files = sorted((testdata / "dicom").glob("*.dcm"))
        assert len(files) >= 20
        checked = 0
        for path in files:
            expected = json.loads(path.with_suffix(".json").read_text())
            data = path.read_bytes()
            if "error" in expected:
                with pytest.raises(dicom.DicomError) as err:
                    dicom.parse_part10(data)
                assert type(err.value).__name__ == expected["error"], path.name
            else:
                obj = dicom.parse_part10(data)
                assert dicom.object_listing(obj) == expected, path.name
                assert dicom.serialize_part10(obj) == data, path.name
            checked += 1
        assert checked == len(files)


class TestExtractPixels:
    def test_8bit_mono2(self):
        grid = dicom.ImageGrid(4, 4, 8, "MONOCHROME2",
                               np.arange(16, dtype=np.uint8))
        obj = dicom.image_to_object(grid, seeded_uid())
        out = dicom.extract_pixels(obj)
        assert out.samples.ravel().tolist() == list(range(16))
        assert out.photometric == "MONOCHROME2"

    def test_short_payload_raises(self):
        grid = dicom.ImageGrid(4, 4, 8, "MONOCHROME2", np.zeros(16, dtype=np.uint8))
        obj = dicom.image_to_object(grid, seeded_uid())
        trimmed = [
            el if el.tag != dicom.PIXEL_DATA
            else dicom.DataElement(el.tag, el.vr, el.value[:15])
            for el in obj.dataset
        ]
        obj.dataset = trimmed
        with pytest.raises(dicom.PixelLengthMismatch):
            dicom.extract_pixels(obj)

    def test_16bit_little_endian_byte_order(self):
        payload = bytes([0x01, 0x00, 0x00, 0x01, 0xFF, 0x00, 0x00, 0xFF])
        # Independent byte-order oracle.
        expected = [int.from_bytes(payload[i:i + 2], "little") for i in range(0, 8, 2)]
        assert expected == [1, 256, 255, 65280]
        obj = minimal_object()
        obj.dataset += [
            dicom.element_us(dicom.SAMPLES_PER_PIXEL, 1),
            dicom.element_text(dicom.PHOTOMETRIC_INTERPRETATION, "CS", "MONOCHROME2"),
            dicom.element_us(dicom.ROWS, 2),
            dicom.element_us(dicom.COLUMNS, 2),
            dicom.element_us(dicom.BITS_ALLOCATED, 16),
            dicom.element_bytes(dicom.PIXEL_DATA, "OW", payload),
        ]
        out = dicom.extract_pixels(dicom.parse_part10(dicom.serialize_part10(obj)))
        assert out.samples.ravel().tolist() == expected

    def test_missing_module_raises(self):
        with pytest.raises(dicom.MissingPixelModule):
            dicom.extract_pixels(minimal_object())

    @pytest.mark.parametrize("bits,maxval", [(8, 255), (16, 65535)])
    @pytest.mark.parametrize("photometric", ["MONOCHROME1", "MONOCHROME2"])
    def test_synthesize_extract_identity(self, bits, maxval, photometric):
        rng = np.random.default_rng(99 + bits)
        rows, cols = 5, 7
        samples = rng.integers(0, maxval + 1, size=(rows, cols)).astype(
            np.uint8 if bits == 8 else np.uint16
        )
        grid = dicom.ImageGrid(rows, cols, bits, photometric, samples)
        out = dicom.extract_pixels(
            dicom.parse_part10(dicom.serialize_part10(dicom.image_to_object(grid, seeded_uid())))
        )
        assert np.array_equal(out.samples, samples)
        assert out.photometric == photometric
        assert out.bits_allocated == bits


class TestStructuredReport:
    def make_doc(self, probs=(0.9, 0.06, 0.04), accepted=True):
        return dicom.SRDocument(
            source_sop_instance_uid="2.25.424242",
            class_labels=dicom.CLASS_LABELS,
            probabilities=probs,
            gate_accepted=accepted,
            model_version="demo-cxr-3class/1.0",
            source_study_uid="2.25.777",
        )

    def test_text_lines_format(self):
        sr = dicom.build_sr(self.make_doc(), uid_source=seeded_uid())
        assert dicom.sr_text_lines(sr) == [
            "COVID-19=0.9000",
            "Non-COVID-19=0.0600",
            "No Finding=0.0400",
        ]

    def test_bad_probability_sum_rejected(self):
        with pytest.raises(dicom.InvariantViolation):
            dicom.build_sr(self.make_doc(probs=(0.5, 0.2, 0.1)))

    def test_roundtrip_modality_is_sr(self):
        sr = dicom.build_sr(self.make_doc(), uid_source=seeded_uid())
        parsed = dicom.parse_part10(dicom.serialize_part10(sr))
        assert parsed.require(dicom.MODALITY).text() == "SR"
        assert parsed.require(dicom.SOP_CLASS_UID).text() == dicom.SR_SOP_CLASS_UID

    def test_reference_and_gate_flag(self):
        sr = dicom.build_sr(self.make_doc(accepted=False), uid_source=seeded_uid())
        seq = sr.require(dicom.REFERENCED_IMAGE_SEQ).value
        assert b"2.25.424242" in seq
        assert sr.require(dicom.SR_GATE_TAG).text() == "REJECTED"

    def test_deterministic_given_uid_and_clock(self):
        clock = lambda: datetime(2026, 1, 15, 12, 0, 0, tzinfo=timezone.utc)
        a = dicom.serialize_part10(dicom.build_sr(self.make_doc(), seeded_uid(5), clock))
        b = dicom.serialize_part10(dicom.build_sr(self.make_doc(), seeded_uid(5), clock))
        assert a == b


# Random-object round-trip property.

_vr_strategies = {
    "CS": st.text(alphabet="ABCDEFGHIJKLMNOPQRSTUVWXYZ_ ", max_size=12),
    "LO": st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126), max_size=30),
    "SH": st.text(alphabet=st.characters(min_codepoint=32, max_codepoint=126), max_size=14),
    "DA": st.just("20260115"),
    "IS": st.integers(min_value=0, max_value=10**8).map(str),
    "US": st.lists(st.integers(0, 0xFFFF), min_size=1, max_size=4),
    "UL": st.lists(st.integers(0, 0xFFFFFFFF), min_size=1, max_size=3),
    "OB": st.binary(max_size=40),
}


@st.composite
def dicom_objects(draw):
    obj = minimal_object()
    # Extra tags strictly above the SOP UID pair, unique and ascending.
    n = draw(st.integers(min_value=0, max_value=6))
    tags = draw(
        st.lists(
            st.tuples(st.sampled_from([0x0010, 0x0018, 0x0020, 0x0028, 0x0033]),
                      st.integers(0x1000, 0x10FF)),
            min_size=n, max_size=n, unique=True,
        )
    )
    extra = []
    for group, element in sorted(tags):
        vr = draw(st.sampled_from(sorted(_vr_strategies)))
        value = draw(_vr_strategies[vr])
        tag = dicom.Tag(group, element)
        if vr == "US":
            extra.append(dicom.element_us(tag, *value))
        elif vr == "UL":
            extra.append(dicom.element_ul(tag, *value))
        elif vr == "OB":
            extra.append(dicom.element_bytes(tag, "OB", value))
        else:
            extra.append(dicom.element_text(tag, vr, value))
    obj.dataset = sorted(obj.dataset + extra, key=lambda el: el.tag)
    return obj


@given(dicom_objects())
@settings(max_examples=150, deadline=None)
def test_parse_serialize_identity(obj):
    data = dicom.serialize_part10(obj)
    parsed = dicom.parse_part10(data)
    assert parsed.meta == obj.meta
    assert parsed.dataset == obj.dataset
    assert dicom.serialize_part10(parsed) == data

"""Strict, minimal DICOM Part 10 codec.

Supports exactly one transfer syntax (Explicit VR Little Endian) and a
small set of value representations; everything else is a typed error.
Sequences are carried as opaque defined-length byte blobs and never
recursed. The codec round-trips its own output byte-for-byte, which is
what the golden-file corpus under ``testdata/dicom/`` locks down.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Optional

import numpy as np

EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"
SR_SOP_CLASS_UID = "1.2.840.10008.5.1.4.1.1.88.11"  # Basic Text SR
CR_IMAGE_STORAGE_UID = "1.2.840.10008.5.1.4.1.1.1"  # Computed Radiography
IMPLEMENTATION_CLASS_UID = "2.25.313807987191947845973105998429814815575"
UID_ROOT = "2.25."

CLASS_LABELS = ("COVID-19", "Non-COVID-19", "No Finding")

# VRs that use the 4-byte length form with two reserved bytes; all other
# supported VRs use the 2-byte length form (PS3.5 7.1.2).
LONG_VRS = frozenset({"OB", "OW", "SQ", "UT"})
SHORT_VRS = frozenset({"UI", "SH", "LO", "PN", "CS", "DA", "TM", "IS", "DS", "US", "UL", "ST"})
SUPPORTED_VRS = LONG_VRS | SHORT_VRS
STRING_VRS = frozenset({"UI", "SH", "LO", "PN", "CS", "DA", "TM", "IS", "DS", "ST", "UT"})

UNDEFINED_LENGTH = 0xFFFFFFFF


class DicomError(Exception):
    """Base class for all codec errors."""


class MissingMagic(DicomError):
    pass


class UnsupportedTransferSyntax(DicomError):
    pass


class TruncatedElement(DicomError):
    pass


class OddLength(DicomError):
    pass


class OutOfOrderTag(DicomError):
    pass


class UnsupportedVR(DicomError):
    pass


class InvariantViolation(DicomError):
    pass


class MissingPixelModule(DicomError):
    pass


class PixelLengthMismatch(DicomError):
    pass


@dataclass(frozen=True, order=True)
class Tag:
    """DICOM (group, element) tag; ordering is lexicographic."""

    group: int
    element: int

    def __str__(self) -> str:
        return f"({self.group:04X},{self.element:04X})"


# Tags this package reads or writes by name.
FILE_META_GROUP_LENGTH = Tag(0x0002, 0x0000)
FILE_META_VERSION = Tag(0x0002, 0x0001)
MEDIA_SOP_CLASS_UID = Tag(0x0002, 0x0002)
MEDIA_SOP_INSTANCE_UID = Tag(0x0002, 0x0003)
TRANSFER_SYNTAX_UID = Tag(0x0002, 0x0010)
IMPLEMENTATION_UID = Tag(0x0002, 0x0012)

INSTANCE_CREATION_DATE = Tag(0x0008, 0x0012)
INSTANCE_CREATION_TIME = Tag(0x0008, 0x0013)
SOP_CLASS_UID = Tag(0x0008, 0x0016)
SOP_INSTANCE_UID = Tag(0x0008, 0x0018)
MODALITY = Tag(0x0008, 0x0060)
MODEL_NAME = Tag(0x0008, 0x1090)
REFERENCED_IMAGE_SEQ = Tag(0x0008, 0x1140)
REFERENCED_SOP_CLASS = Tag(0x0008, 0x1150)
REFERENCED_SOP_INSTANCE = Tag(0x0008, 0x1155)
STUDY_INSTANCE_UID = Tag(0x0020, 0x000D)
SAMPLES_PER_PIXEL = Tag(0x0028, 0x0002)
PHOTOMETRIC_INTERPRETATION = Tag(0x0028, 0x0004)
ROWS = Tag(0x0028, 0x0010)
COLUMNS = Tag(0x0028, 0x0011)
BITS_ALLOCATED = Tag(0x0028, 0x0100)
BITS_STORED = Tag(0x0028, 0x0101)
HIGH_BIT = Tag(0x0028, 0x0102)
PIXEL_REPRESENTATION = Tag(0x0028, 0x0103)
PIXEL_DATA = Tag(0x7FE0, 0x0010)

# Private group carrying the prediction text lines of the SR stand-in.
PRIVATE_CREATOR = Tag(0x0071, 0x0010)
PRIVATE_CREATOR_VALUE = "CXRTRIAGE"
SR_TEXT_TAGS = (Tag(0x0071, 0x1001), Tag(0x0071, 0x1002), Tag(0x0071, 0x1003))
SR_GATE_TAG = Tag(0x0071, 0x1004)


@dataclass(frozen=True)
class DataElement:
    """One tag/VR/value triple. ``value`` holds the raw on-disk bytes."""

    tag: Tag
    vr: str
    value: bytes

    def __post_init__(self):
        if self.vr not in SUPPORTED_VRS:
            raise UnsupportedVR(f"VR {self.vr!r} at {self.tag} not in supported set")

    def text(self) -> str:
        """Decoded string view; trailing pad byte stripped, bytes >127 pass through."""
        return self.value.decode("latin-1").rstrip("\x00 ")

    def uint_values(self) -> list[int]:
        width = 2 if self.vr == "US" else 4
        if self.vr not in ("US", "UL") or len(self.value) % width:
            raise InvariantViolation(f"{self.tag} is not an unsigned-int element")
        return [
            int.from_bytes(self.value[i : i + width], "little")
            for i in range(0, len(self.value), width)
        ]

    def first_uint(self) -> int:
        vals = self.uint_values()
        if not vals:
            raise InvariantViolation(f"{self.tag} has no value")
        return vals[0]


def _pad(vr: str, raw: bytes) -> bytes:
    if len(raw) % 2 == 0:
        return raw
    return raw + (b"\x00" if vr in ("UI", "OB", "OW", "SQ") else b" ")


def element_text(tag: Tag, vr: str, text: str) -> DataElement:
    if vr not in STRING_VRS:
        raise UnsupportedVR(f"{vr} is not a string VR")
    return DataElement(tag, vr, _pad(vr, text.encode("latin-1")))


def element_us(tag: Tag, *values: int) -> DataElement:
    raw = b"".join(v.to_bytes(2, "little") for v in values)
    return DataElement(tag, "US", raw)


def element_ul(tag: Tag, *values: int) -> DataElement:
    raw = b"".join(v.to_bytes(4, "little") for v in values)
    return DataElement(tag, "UL", raw)


def element_bytes(tag: Tag, vr: str, raw: bytes) -> DataElement:
    return DataElement(tag, vr, _pad(vr, raw))


@dataclass
class DicomObject:
    """Parsed or constructed DICOM object: file-meta group plus dataset."""

    meta: list[DataElement]
    dataset: list[DataElement]
    transfer_syntax: str = EXPLICIT_VR_LE

    def find(self, tag: Tag) -> Optional[DataElement]:
        elements = self.meta if tag.group == 0x0002 else self.dataset
        for el in elements:
            if el.tag == tag:
                return el
        return None

    def require(self, tag: Tag) -> DataElement:
        el = self.find(tag)
        if el is None:
            raise InvariantViolation(f"required element {tag} missing")
        return el

    def sop_instance_uid(self) -> str:
        return self.require(SOP_INSTANCE_UID).text()

    def study_instance_uid(self) -> str:
        el = self.find(STUDY_INSTANCE_UID)
        return el.text() if el is not None else ""

    def validate(self) -> None:
        for name, elements in (("meta", self.meta), ("dataset", self.dataset)):
            for prev, cur in zip(elements, elements[1:]):
                if not prev.tag < cur.tag:
                    raise InvariantViolation(
                        f"{name} tags not strictly ascending: {prev.tag} !< {cur.tag}"
                    )
        for el in self.meta:
            if el.tag.group != 0x0002:
                raise InvariantViolation(f"non-meta element {el.tag} in meta group")
        if self.find(SOP_CLASS_UID) is None or self.find(SOP_INSTANCE_UID) is None:
            raise InvariantViolation("dataset must carry SOPClassUID and SOPInstanceUID")


def new_uid(randbits: Optional[Callable[[int], int]] = None) -> str:
    """Fresh UID under the private root: '2.25.' + 128 random bits in decimal."""
    if randbits is None:
        value = int.from_bytes(os.urandom(16), "big")
    else:
        value = randbits(128)
    return UID_ROOT + str(value)


# ---------------------------------------------------------------------------
# Wire encoding
# ---------------------------------------------------------------------------


def _encode_element(el: DataElement) -> bytes:
    value = _pad(el.vr, el.value)
    head = (
        el.tag.group.to_bytes(2, "little")
        + el.tag.element.to_bytes(2, "little")
        + el.vr.encode("ascii")
    )
    if el.vr in LONG_VRS:
        return head + b"\x00\x00" + len(value).to_bytes(4, "little") + value
    if len(value) > 0xFFFF:
        raise InvariantViolation(f"{el.tag} value too long for short-form VR {el.vr}")
    return head + len(value).to_bytes(2, "little") + value


def encoded_length(el: DataElement) -> int:
    value_len = len(el.value) + (len(el.value) % 2)
    return (12 if el.vr in LONG_VRS else 8) + value_len


def file_meta_for(sop_class_uid: str, sop_instance_uid: str,
                  transfer_syntax: str = EXPLICIT_VR_LE) -> list[DataElement]:
    """Complete group-0002 list, including a correct group-length element."""
    body = [
        DataElement(FILE_META_VERSION, "OB", b"\x00\x01"),
        element_text(MEDIA_SOP_CLASS_UID, "UI", sop_class_uid),
        element_text(MEDIA_SOP_INSTANCE_UID, "UI", sop_instance_uid),
        element_text(TRANSFER_SYNTAX_UID, "UI", transfer_syntax),
        element_text(IMPLEMENTATION_UID, "UI", IMPLEMENTATION_CLASS_UID),
    ]
    group_len = sum(encoded_length(el) for el in body)
    return [element_ul(FILE_META_GROUP_LENGTH, group_len)] + body


def serialize_part10(obj: DicomObject) -> bytes:
    """Encode to Part 10 bytes: 128-byte preamble, DICM, meta, dataset."""
    obj.validate()
    meta = obj.meta
    if not any(el.tag == TRANSFER_SYNTAX_UID for el in meta):
        meta = file_meta_for(
            obj.require(SOP_CLASS_UID).text(),
            obj.require(SOP_INSTANCE_UID).text(),
            obj.transfer_syntax,
        )
    out = bytearray(b"\x00" * 128 + b"DICM")
    for el in meta:
        out += _encode_element(el)
    for el in obj.dataset:
        out += _encode_element(el)
    return bytes(out)


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def _read_element(data: bytes, off: int) -> tuple[DataElement, int]:
    if off + 8 > len(data):
        raise TruncatedElement(f"element header truncated at offset {off}")
    group = int.from_bytes(data[off : off + 2], "little")
    element = int.from_bytes(data[off + 2 : off + 4], "little")
    tag = Tag(group, element)
    try:
        vr = data[off + 4 : off + 6].decode("ascii")
    except UnicodeDecodeError:
        raise UnsupportedVR(f"unreadable VR bytes at {tag}") from None
    if vr not in SUPPORTED_VRS:
        raise UnsupportedVR(f"VR {vr!r} at {tag} not in supported set")
    if vr in LONG_VRS:
        if off + 12 > len(data):
            raise TruncatedElement(f"length field truncated at {tag}")
        length = int.from_bytes(data[off + 8 : off + 12], "little")
        body = off + 12
    else:
        length = int.from_bytes(data[off + 6 : off + 8], "little")
        body = off + 8
    if length == UNDEFINED_LENGTH:
        raise TruncatedElement(f"undefined length at {tag} not supported")
    if length % 2:
        raise OddLength(f"odd value length {length} at {tag}")
    if body + length > len(data):
        raise TruncatedElement(
            f"{tag} declares {length} value bytes, {len(data) - body} remain"
        )
    return DataElement(tag, vr, data[body : body + length]), body + length


def parse_part10(data: bytes) -> DicomObject:
    """Parse Part 10 bytes; only Explicit VR Little Endian datasets accepted.

    Unknown tags are preserved verbatim. Out-of-order or duplicate tags are
    an error rather than being silently re-sorted.
    """
    if len(data) < 132 or data[128:132] != b"DICM":
        raise MissingMagic("no DICM marker at offset 128")
    off = 132
    meta: list[DataElement] = []
    dataset: list[DataElement] = []
    syntax_checked = False
    prev_tag: Optional[Tag] = None

    def ensure_syntax() -> None:
        ts = next((m.text() for m in meta if m.tag == TRANSFER_SYNTAX_UID), None)
        if ts is None:
            raise UnsupportedTransferSyntax("file meta lacks (0002,0010)")
        if ts != EXPLICIT_VR_LE:
            raise UnsupportedTransferSyntax(ts)

    while off < len(data):
        el, off = _read_element(data, off)
        in_meta = el.tag.group == 0x0002
        if not in_meta and not syntax_checked:
            # End of group 0002: the dataset encoding is now committed.
            ensure_syntax()
            syntax_checked = True
            prev_tag = None
        if in_meta and syntax_checked:
            raise OutOfOrderTag(f"meta element {el.tag} after dataset began")
        if prev_tag is not None and not prev_tag < el.tag:
            raise OutOfOrderTag(f"{el.tag} follows {prev_tag}")
        prev_tag = el.tag
        (meta if in_meta else dataset).append(el)
    if not syntax_checked:
        ensure_syntax()
    obj = DicomObject(meta=meta, dataset=dataset, transfer_syntax=EXPLICIT_VR_LE)
    obj.validate()
    return obj


# ---------------------------------------------------------------------------
# Pixel access
# ---------------------------------------------------------------------------


@dataclass
class ImageGrid:
    """Row-major unsigned intensity raster extracted from one DICOM object."""

    rows: int
    cols: int
    bits_allocated: int
    photometric: str
    samples: np.ndarray  # shape (rows, cols), uint8 or uint16

    def __post_init__(self):
        if self.bits_allocated not in (8, 16):
            raise InvariantViolation("bits_allocated must be 8 or 16")
        if self.photometric not in ("MONOCHROME1", "MONOCHROME2"):
            raise InvariantViolation(f"unsupported photometric {self.photometric!r}")
        self.samples = np.asarray(self.samples)
        if self.samples.size != self.rows * self.cols:
            raise InvariantViolation(
                f"sample count {self.samples.size} != {self.rows}x{self.cols}"
            )
        self.samples = self.samples.reshape(self.rows, self.cols)
        if self.samples.size and int(self.samples.max()) > self.maxval:
            raise InvariantViolation("sample exceeds bit depth")

    @property
    def maxval(self) -> int:
        return (1 << self.bits_allocated) - 1


def extract_pixels(obj: DicomObject) -> ImageGrid:
    """Pull the native pixel raster out of an uncompressed object.

    MONOCHROME1 is returned as-is with the photometric flag set; inverting
    is the preprocessor's job.
    """
    needed = (ROWS, COLUMNS, BITS_ALLOCATED, PHOTOMETRIC_INTERPRETATION, PIXEL_DATA)
    missing = [str(t) for t in needed if obj.find(t) is None]
    if missing:
        raise MissingPixelModule("missing " + ", ".join(missing))
    rows = obj.require(ROWS).first_uint()
    cols = obj.require(COLUMNS).first_uint()
    bits = obj.require(BITS_ALLOCATED).first_uint()
    photometric = obj.require(PHOTOMETRIC_INTERPRETATION).text()
    if bits not in (8, 16):
        raise InvariantViolation(f"BitsAllocated {bits} unsupported")
    payload = obj.require(PIXEL_DATA).value
    expected = rows * cols * (bits // 8)
    padded = expected + (expected % 2)
    if len(payload) not in (expected, padded):
        raise PixelLengthMismatch(
            f"PixelData holds {len(payload)} bytes, expected {expected}"
        )
    dtype = np.uint8 if bits == 8 else np.dtype("<u2")
    samples = np.frombuffer(payload[:expected], dtype=dtype).copy()
    return ImageGrid(rows, cols, bits, photometric, samples)


def image_to_object(
    grid: ImageGrid,
    uid_source: Callable[[], str] = new_uid,
    study_uid: Optional[str] = None,
) -> DicomObject:
    """Wrap a raster in a minimal valid Part 10 CR object (extract_pixels inverse)."""
    sop_uid = uid_source()
    payload = np.ascontiguousarray(
        grid.samples, dtype=np.uint8 if grid.bits_allocated == 8 else np.dtype("<u2")
    ).tobytes()
    pixel_vr = "OB" if grid.bits_allocated == 8 else "OW"
    dataset = [
        element_text(SOP_CLASS_UID, "UI", CR_IMAGE_STORAGE_UID),
        element_text(SOP_INSTANCE_UID, "UI", sop_uid),
        element_text(MODALITY, "CS", "CR"),
        element_text(STUDY_INSTANCE_UID, "UI", study_uid or uid_source()),
        element_us(SAMPLES_PER_PIXEL, 1),
        element_text(PHOTOMETRIC_INTERPRETATION, "CS", grid.photometric),
        element_us(ROWS, grid.rows),
        element_us(COLUMNS, grid.cols),
        element_us(BITS_ALLOCATED, grid.bits_allocated),
        element_us(BITS_STORED, grid.bits_allocated),
        element_us(HIGH_BIT, grid.bits_allocated - 1),
        element_us(PIXEL_REPRESENTATION, 0),
        element_bytes(PIXEL_DATA, pixel_vr, payload),
    ]
    return DicomObject(meta=file_meta_for(CR_IMAGE_STORAGE_UID, sop_uid), dataset=dataset)


# ---------------------------------------------------------------------------
# Structured report
# ---------------------------------------------------------------------------


@dataclass
class SRDocument:
    """Prediction payload destined for a Basic Text SR stand-in object."""

    source_sop_instance_uid: str
    class_labels: tuple[str, ...]
    probabilities: tuple[float, ...]
    gate_accepted: bool
    model_version: str
    created_at: Optional[datetime] = None
    source_study_uid: Optional[str] = None
    source_sop_class_uid: str = CR_IMAGE_STORAGE_UID

    def validate(self) -> None:
        if tuple(self.class_labels) != CLASS_LABELS:
            raise InvariantViolation(f"class labels must be {CLASS_LABELS}")
        probs = tuple(self.probabilities)
        if len(probs) != 3 or any(not (0.0 <= p <= 1.0) for p in probs):
            raise InvariantViolation("probabilities must be three unit-interval reals")
        if abs(sum(probs) - 1.0) > 1e-6:
            raise InvariantViolation(f"probabilities sum to {sum(probs)}, not 1")


def _referenced_image_sq(sop_class_uid: str, sop_instance_uid: str) -> bytes:
    """One defined-length item referencing the source instance, as raw bytes."""
    content = _encode_element(element_text(REFERENCED_SOP_CLASS, "UI", sop_class_uid))
    content += _encode_element(element_text(REFERENCED_SOP_INSTANCE, "UI", sop_instance_uid))
    item = (0xFFFE).to_bytes(2, "little") + (0xE000).to_bytes(2, "little")
    item += len(content).to_bytes(4, "little") + content
    return item


def build_sr(
    doc: SRDocument,
    uid_source: Callable[[], str] = new_uid,
    clock: Callable[[], datetime] = lambda: datetime.now(timezone.utc),
) -> DicomObject:
    """Build the SR object carrying one text line per class, 'LABEL=<p>' at 4 d.p.

    Deterministic except for the generated SOP instance UID and timestamp,
    both injectable for golden-file tests.
    """
    doc.validate()
    created = doc.created_at or clock()
    sop_uid = uid_source()
    study_uid = doc.source_study_uid or uid_source()
    lines = [
        f"{label}={p:.4f}" for label, p in zip(doc.class_labels, doc.probabilities)
    ]
    dataset = [
        element_text(INSTANCE_CREATION_DATE, "DA", created.strftime("%Y%m%d")),
        element_text(INSTANCE_CREATION_TIME, "TM", created.strftime("%H%M%S.%f")),
        element_text(SOP_CLASS_UID, "UI", SR_SOP_CLASS_UID),
        element_text(SOP_INSTANCE_UID, "UI", sop_uid),
        element_text(MODALITY, "CS", "SR"),
        element_text(MODEL_NAME, "LO", doc.model_version),
        element_bytes(
            REFERENCED_IMAGE_SEQ,
            "SQ",
            _referenced_image_sq(doc.source_sop_class_uid, doc.source_sop_instance_uid),
        ),
        element_text(STUDY_INSTANCE_UID, "UI", study_uid),
        element_text(PRIVATE_CREATOR, "LO", PRIVATE_CREATOR_VALUE),
        element_text(SR_TEXT_TAGS[0], "ST", lines[0]),
        element_text(SR_TEXT_TAGS[1], "ST", lines[1]),
        element_text(SR_TEXT_TAGS[2], "ST", lines[2]),
        element_text(SR_GATE_TAG, "CS", "ACCEPTED" if doc.gate_accepted else "REJECTED"),
    ]
    return DicomObject(meta=file_meta_for(SR_SOP_CLASS_UID, sop_uid), dataset=dataset)


def sr_text_lines(obj: DicomObject) -> list[str]:
    """The three per-class prediction lines of an SR built by this codec."""
    return [obj.require(tag).text() for tag in SR_TEXT_TAGS]


def object_listing(obj: DicomObject) -> dict:
    """JSON-friendly element listing used by the golden corpus."""

    def row(el: DataElement) -> dict:
        return {"tag": str(el.tag), "vr": el.vr, "value_hex": el.value.hex()}

    return {
        "transfer_syntax": obj.transfer_syntax,
        "meta": [row(el) for el in obj.meta],
        "dataset": [row(el) for el in obj.dataset],
    }

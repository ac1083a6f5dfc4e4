"""multipart/related request bodies (RFC 2387) for STOW-RS.

Only what the gateway needs: split a body into parts with headers, and
compose one for clients/tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from email.message import Message


class MultipartError(Exception):
    """The multipart envelope itself is unreadable (HTTP 400 territory)."""


@dataclass
class ContentType:
    media_type: str
    params: dict[str, str]


def parse_content_type(value: str) -> ContentType:
    msg = Message()
    msg["Content-Type"] = value
    params = {k.lower(): v for k, v in msg.get_params()[1:]}
    return ContentType(media_type=msg.get_content_type(), params=params)


@dataclass
class Part:
    headers: dict[str, str]  # lower-cased names
    body: bytes

    @property
    def content_type(self) -> str:
        return parse_content_type(self.headers.get("content-type", "")).media_type


def parse_related(boundary: str, body: bytes) -> list[Part]:
    """Split a multipart/related body at its boundary delimiters."""
    if not boundary:
        raise MultipartError("empty boundary")
    delim = b"--" + boundary.encode("ascii")
    data = body if not body.startswith(delim) else b"\r\n" + body
    chunks = data.split(b"\r\n" + delim)
    if len(chunks) < 2:
        raise MultipartError("boundary delimiter never appears")
    closing = chunks[-1]
    if not closing.lstrip(b" \t").startswith(b"--"):
        raise MultipartError("missing closing boundary")
    parts: list[Part] = []
    for chunk in chunks[1:-1]:
        # After the delimiter line: optional padding, CRLF, headers, CRLF CRLF, body.
        chunk = chunk.lstrip(b" \t")
        if not chunk.startswith(b"\r\n"):
            raise MultipartError("garbage after boundary delimiter")
        chunk = chunk[2:]
        head, sep, content = chunk.partition(b"\r\n\r\n")
        if not sep:
            raise MultipartError("part lacks blank line after headers")
        headers: dict[str, str] = {}
        for line in head.split(b"\r\n"):
            if not line:
                continue
            name, colon, value = line.partition(b":")
            if not colon:
                raise MultipartError(f"malformed part header line {line!r}")
            headers[name.decode("latin-1").strip().lower()] = value.decode("latin-1").strip()
        parts.append(Part(headers=headers, body=content))
    return parts


def build_related(parts: list[bytes], boundary: str = "cxrtriage-boundary",
                  part_type: str = "application/dicom") -> tuple[str, bytes]:
    """Compose (content_type, body) for a STOW-RS POST."""
    delim = b"--" + boundary.encode("ascii")
    chunks = []
    for body in parts:
        chunks.append(delim + b"\r\n" + f"Content-Type: {part_type}".encode("ascii")
                      + b"\r\n\r\n" + body + b"\r\n")
    payload = b"".join(chunks) + delim + b"--\r\n"
    content_type = f'multipart/related; type="{part_type}"; boundary={boundary}'
    return content_type, payload

"""Splat PLY reader/writer.

The on-disk schema is 62 float32 properties per vertex:
x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3,
with f_rest channel-major (15 higher-order coefficients for R, then G, then B),
opacity/scale pre-activation, and rot as (w, x, y, z). Binary files are
little-endian; ASCII files are accepted on read.
"""

from __future__ import annotations

import numpy as np

from ..errors import PlyParseError, PlySchemaError, PlyTruncationError
from ..model import MAX_SH_DEGREE, NUM_SH_COEFFS, SplatCloud

SPLAT_PLY_PROPERTIES: tuple[str, ...] = (
    "x",
    "y",
    "z",
    "nx",
    "ny",
    "nz",
    "f_dc_0",
    "f_dc_1",
    "f_dc_2",
    *(f"f_rest_{i}" for i in range(45)),
    "opacity",
    "scale_0",
    "scale_1",
    "scale_2",
    "rot_0",
    "rot_1",
    "rot_2",
    "rot_3",
)

_SCHEMA_SET = frozenset(SPLAT_PLY_PROPERTIES)
_FLOAT_TYPES = {"float", "float32"}
# scalar PLY types: (binary size, numpy little-endian dtype)
_SCALAR_TYPES = {
    "char": (1, "i1"),
    "int8": (1, "i1"),
    "uchar": (1, "u1"),
    "uint8": (1, "u1"),
    "short": (2, "<i2"),
    "int16": (2, "<i2"),
    "ushort": (2, "<u2"),
    "uint16": (2, "<u2"),
    "int": (4, "<i4"),
    "int32": (4, "<i4"),
    "uint": (4, "<u4"),
    "uint32": (4, "<u4"),
    "float": (4, "<f4"),
    "float32": (4, "<f4"),
    "double": (8, "<f8"),
    "float64": (8, "<f8"),
}
_MAX_HEADER_BYTES = 64 * 1024


def _cloud_to_columns(cloud: SplatCloud) -> np.ndarray:
    n = len(cloud)
    cols = np.zeros((n, len(SPLAT_PLY_PROPERTIES)), dtype=np.float64)
    cols[:, 0:3] = cloud.positions
    # 3:6 stay zero (normals)
    cols[:, 6:9] = cloud.sh_coeffs[:, :, 0]
    for ch in range(3):
        cols[:, 9 + 15 * ch : 9 + 15 * (ch + 1)] = cloud.sh_coeffs[:, ch, 1:NUM_SH_COEFFS]
    cols[:, 54] = cloud.opacity_logits
    cols[:, 55:58] = cloud.log_scales
    cols[:, 58:62] = cloud.rotations
    return cols


def _columns_to_cloud(cols: np.ndarray) -> SplatCloud:
    n = cols.shape[0]
    sh = np.zeros((n, 3, NUM_SH_COEFFS), dtype=np.float64)
    sh[:, :, 0] = cols[:, 6:9]
    for ch in range(3):
        sh[:, ch, 1:NUM_SH_COEFFS] = cols[:, 9 + 15 * ch : 9 + 15 * (ch + 1)]
    return SplatCloud(
        positions=cols[:, 0:3],
        log_scales=cols[:, 55:58],
        rotations=cols[:, 58:62],
        opacity_logits=cols[:, 54],
        sh_coeffs=sh,
        active_sh_degree=MAX_SH_DEGREE,
    )


def _header_bytes(count: int, fmt: str) -> bytes:
    lines = ["ply", f"format {fmt} 1.0", f"element vertex {count}"]
    lines += [f"property float {name}" for name in SPLAT_PLY_PROPERTIES]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def write_splat_ply(cloud: SplatCloud) -> bytes:
    """Serialize a cloud to binary little-endian splat PLY bytes."""
    body = np.ascontiguousarray(_cloud_to_columns(cloud), dtype="<f4").tobytes()
    return _header_bytes(len(cloud), "binary_little_endian") + body


def write_splat_ply_ascii(cloud: SplatCloud) -> bytes:
    """Serialize to the ASCII variant (one vertex per line).

    Values are printed with float32 round-trip precision, so converting
    binary -> ascii -> binary is lossless.
    """
    cols = _cloud_to_columns(cloud).astype(np.float32)
    rows = [
        " ".join(np.format_float_positional(v, unique=True, trim="0") for v in row) for row in cols
    ]
    body = ("\n".join(rows) + "\n").encode("ascii") if rows else b""
    return _header_bytes(len(cloud), "ascii") + body


def save_splat_ply(path, cloud: SplatCloud, ascii: bool = False) -> None:
    """Write a cloud to a file, binary by default."""
    data = write_splat_ply_ascii(cloud) if ascii else write_splat_ply(cloud)
    with open(path, "wb") as handle:
        handle.write(data)


def load_splat_ply(path) -> SplatCloud:
    """Read a splat PLY file (either format variant)."""
    with open(path, "rb") as handle:
        return read_splat_ply(handle.read())


def _parse_header(data: bytes):
    """Returns (format, vertex count, [(type, name)] in file order, body offset)."""
    if not data.startswith(b"ply"):
        raise PlyParseError("missing 'ply' magic", offset=0)
    fmt = None
    count = None
    props: list[tuple[str, str]] = []
    seen_vertex = False
    in_trailing_element = False
    body_offset = None
    limit = min(len(data), _MAX_HEADER_BYTES)
    offset = 0
    first = True
    while offset < limit:
        nl = data.find(b"\n", offset, limit)
        if nl < 0:
            break
        line_start = offset
        raw = data[offset:nl]
        offset = nl + 1
        try:
            line = raw.decode("ascii").strip()
        except UnicodeDecodeError:
            raise PlyParseError("non-ASCII bytes in header", offset=line_start) from None
        if first:
            first = False
            if line != "ply":
                raise PlyParseError("first line must be 'ply'", offset=0)
            continue
        if not line or line.startswith("comment") or line.startswith("obj_info"):
            continue
        tokens = line.split()
        if tokens[0] == "format":
            if len(tokens) != 3 or tokens[2] != "1.0" or tokens[1] not in ("binary_little_endian", "ascii"):
                raise PlyParseError(f"unsupported format line {line!r}", offset=line_start)
            fmt = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3:
                raise PlyParseError(f"malformed element line {line!r}", offset=line_start)
            if tokens[1] == "vertex" and not seen_vertex:
                seen_vertex = True
                try:
                    count = int(tokens[2])
                except ValueError:
                    raise PlyParseError(f"bad vertex count {tokens[2]!r}", offset=line_start) from None
                if count < 0:
                    raise PlyParseError(f"negative vertex count {count}", offset=line_start)
            else:
                # the splat schema defines no other elements; tolerate only
                # trailing empty ones
                try:
                    extra = int(tokens[2])
                except ValueError:
                    raise PlyParseError(f"bad element count {tokens[2]!r}", offset=line_start) from None
                if extra != 0 or not seen_vertex:
                    raise PlyParseError(f"unsupported element {tokens[1]!r}", offset=line_start)
                in_trailing_element = True
        elif tokens[0] == "property":
            if in_trailing_element:
                continue
            if not seen_vertex:
                raise PlyParseError("property before any element", offset=line_start)
            if len(tokens) >= 2 and tokens[1] == "list":
                raise PlySchemaError(
                    "list properties are not part of the splat schema",
                    property_name=tokens[-1] if len(tokens) > 2 else "?",
                )
            if len(tokens) != 3:
                raise PlyParseError(f"malformed property line {line!r}", offset=line_start)
            props.append((tokens[1], tokens[2]))
        elif tokens[0] == "end_header":
            body_offset = offset
            break
        else:
            raise PlyParseError(f"unrecognized header line {line!r}", offset=line_start)
    if body_offset is None:
        raise PlyParseError("header has no end_header line", offset=limit)
    if fmt is None:
        raise PlyParseError("header has no format line", offset=body_offset)
    if count is None:
        raise PlyParseError("header has no vertex element", offset=body_offset)
    return fmt, count, props, body_offset


def _schema_column_map(props: list[tuple[str, str]]) -> dict[str, int]:
    """Validate property types and map each schema name to its file column."""
    name_to_idx: dict[str, int] = {}
    for i, (ptype, name) in enumerate(props):
        if ptype not in _SCALAR_TYPES:
            raise PlySchemaError(f"unsupported property type {ptype!r}", property_name=name)
        if name in _SCHEMA_SET and ptype not in _FLOAT_TYPES:
            raise PlySchemaError(f"property has type {ptype!r}, expected float", property_name=name)
        name_to_idx.setdefault(name, i)
    for required in SPLAT_PLY_PROPERTIES:
        if required not in name_to_idx:
            raise PlySchemaError("missing required property", property_name=required)
    return name_to_idx


def read_splat_ply(data: bytes) -> SplatCloud:
    """Parse splat PLY bytes (binary little-endian or ASCII) into a cloud.

    Unknown extra scalar properties are skipped. The cloud is returned with
    the full SH degree active; the format does not record a degree.
    """
    fmt, count, props, body_offset = _parse_header(data)
    name_to_idx = _schema_column_map(props)
    schema_cols = [name_to_idx[name] for name in SPLAT_PLY_PROPERTIES]

    if fmt == "binary_little_endian":
        stride = sum(_SCALAR_TYPES[ptype][0] for ptype, _ in props)
        expected = count * stride
        actual = len(data) - body_offset
        if actual < expected:
            raise PlyTruncationError(expected=expected, actual=actual, offset=len(data))
        if count == 0:
            return _columns_to_cloud(np.zeros((0, len(SPLAT_PLY_PROPERTIES))))
        record = np.dtype({
            "names": [f"p{i}" for i in range(len(props))],
            "formats": [_SCALAR_TYPES[ptype][1] for ptype, _ in props],
        })
        table = np.frombuffer(data, dtype=record, count=count, offset=body_offset)
        # silence FP flags: arbitrary file bytes may decode to signaling NaNs
        with np.errstate(invalid="ignore", over="ignore"):
            cols = np.stack(
                [table[f"p{i}"].astype(np.float64) for i in schema_cols], axis=1
            )
        return _columns_to_cloud(cols)

    # ASCII body: whitespace-separated values, row-major
    tokens = data[body_offset:].split()
    expected_values = count * len(props)
    if len(tokens) < expected_values:
        raise PlyTruncationError(
            expected=expected_values, actual=len(tokens), unit="values", offset=len(data)
        )
    try:
        values = np.array(tokens[:expected_values], dtype=np.float64)
    except ValueError:
        raise PlyParseError("non-numeric token in ASCII body", offset=body_offset) from None
    table = values.reshape(count, len(props)) if count else np.zeros((0, len(props)))
    # quantize through float32 to mirror binary storage precision; values
    # beyond float32 range legitimately become infinities, without FP flags
    with np.errstate(invalid="ignore", over="ignore"):
        cols = table[:, schema_cols].astype(np.float32).astype(np.float64)
    return _columns_to_cloud(cols)

/**
 * Splat PLY reader, bit-compatible with the server's writer.
 *
 * The schema is 62 float32 properties per vertex:
 * x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3,
 * with f_rest channel-major, opacity/scale pre-activation, and rot as
 * (w, x, y, z). Binary little-endian and ASCII variants are accepted;
 * unknown extra scalar properties are skipped.
 */

export class PlyError extends Error {
  constructor(message: string, readonly offset?: number) {
    super(offset === undefined ? message : `${message} (byte offset ${offset})`);
    this.name = "PlyError";
  }
}

export class PlySchemaError extends PlyError {
  constructor(message: string, readonly propertyName: string) {
    super(`${message}: ${propertyName}`);
    this.name = "PlySchemaError";
  }
}

export const SPLAT_PLY_PROPERTIES: readonly string[] = [
  "x",
  "y",
  "z",
  "nx",
  "ny",
  "nz",
  "f_dc_0",
  "f_dc_1",
  "f_dc_2",
  ...Array.from({ length: 45 }, (_, i) => `f_rest_${i}`),
  "opacity",
  "scale_0",
  "scale_1",
  "scale_2",
  "rot_0",
  "rot_1",
  "rot_2",
  "rot_3",
];

const SCHEMA_SET = new Set(SPLAT_PLY_PROPERTIES);
const FLOAT_TYPES = new Set(["float", "float32"]);

type ScalarReader = (view: DataView, offset: number) => number;

/** scalar PLY types: byte size plus a little-endian reader */
const SCALAR_TYPES: Record<string, { size: number; read: ScalarReader }> = {
  char: { size: 1, read: (v, o) => v.getInt8(o) },
  int8: { size: 1, read: (v, o) => v.getInt8(o) },
  uchar: { size: 1, read: (v, o) => v.getUint8(o) },
  uint8: { size: 1, read: (v, o) => v.getUint8(o) },
  short: { size: 2, read: (v, o) => v.getInt16(o, true) },
  int16: { size: 2, read: (v, o) => v.getInt16(o, true) },
  ushort: { size: 2, read: (v, o) => v.getUint16(o, true) },
  uint16: { size: 2, read: (v, o) => v.getUint16(o, true) },
  int: { size: 4, read: (v, o) => v.getInt32(o, true) },
  int32: { size: 4, read: (v, o) => v.getInt32(o, true) },
  uint: { size: 4, read: (v, o) => v.getUint32(o, true) },
  uint32: { size: 4, read: (v, o) => v.getUint32(o, true) },
  float: { size: 4, read: (v, o) => v.getFloat32(o, true) },
  float32: { size: 4, read: (v, o) => v.getFloat32(o, true) },
  double: { size: 8, read: (v, o) => v.getFloat64(o, true) },
  float64: { size: 8, read: (v, o) => v.getFloat64(o, true) },
};

const MAX_HEADER_BYTES = 64 * 1024;

/** Column index of each schema property within a parsed cloud's rows. */
export const COLUMN: Readonly<Record<string, number>> = Object.fromEntries(
  SPLAT_PLY_PROPERTIES.map((name, i) => [name, i])
);

const STRIDE = SPLAT_PLY_PROPERTIES.length;

/** A parsed splat cloud: `values` holds count rows of 62 schema columns. */
export interface SplatCloud {
  count: number;
  values: Float32Array;
}

export function propertyValue(cloud: SplatCloud, row: number, name: string): number {
  const col = COLUMN[name];
  if (col === undefined || row < 0 || row >= cloud.count) {
    throw new RangeError(`no property ${name} at row ${row}`);
  }
  return cloud.values[row * STRIDE + col]!;
}

/** One column as a packed array (row-major extraction). */
export function column(cloud: SplatCloud, name: string): Float32Array {
  const col = COLUMN[name];
  if (col === undefined) throw new RangeError(`unknown property ${name}`);
  const out = new Float32Array(cloud.count);
  for (let row = 0; row < cloud.count; row++) out[row] = cloud.values[row * STRIDE + col]!;
  return out;
}

interface Header {
  format: "binary_little_endian" | "ascii";
  count: number;
  props: Array<{ type: string; name: string }>;
  bodyOffset: number;
}

function parseHeader(data: Uint8Array): Header {
  if (data.length < 3 || data[0] !== 0x70 || data[1] !== 0x6c || data[2] !== 0x79) {
    throw new PlyError("missing 'ply' magic", 0);
  }
  let format: Header["format"] | null = null;
  let count: number | null = null;
  const props: Header["props"] = [];
  let seenVertex = false;
  let inTrailingElement = false;
  let bodyOffset: number | null = null;
  const limit = Math.min(data.length, MAX_HEADER_BYTES);
  let offset = 0;
  let first = true;
  const ascii = new TextDecoder("ascii", { fatal: false });

  while (offset < limit) {
    const nl = data.indexOf(0x0a, offset);
    if (nl < 0 || nl >= limit) break;
    const lineStart = offset;
    const raw = data.subarray(offset, nl);
    offset = nl + 1;
    for (const byte of raw) {
      if (byte > 0x7f) throw new PlyError("non-ASCII bytes in header", lineStart);
    }
    const line = ascii.decode(raw).trim();
    if (first) {
      first = false;
      if (line !== "ply") throw new PlyError("first line must be 'ply'", 0);
      continue;
    }
    if (line === "" || line.startsWith("comment") || line.startsWith("obj_info")) continue;
    const tokens = line.split(/\s+/);
    if (tokens[0] === "format") {
      if (
        tokens.length !== 3 ||
        tokens[2] !== "1.0" ||
        (tokens[1] !== "binary_little_endian" && tokens[1] !== "ascii")
      ) {
        throw new PlyError(`unsupported format line '${line}'`, lineStart);
      }
      format = tokens[1] as Header["format"];
    } else if (tokens[0] === "element") {
      if (tokens.length !== 3) throw new PlyError(`malformed element line '${line}'`, lineStart);
      if (tokens[1] === "vertex" && !seenVertex) {
        seenVertex = true;
        count = Number(tokens[2]);
        if (!Number.isInteger(count)) throw new PlyError(`bad vertex count '${tokens[2]}'`, lineStart);
        if (count < 0) throw new PlyError(`negative vertex count ${count}`, lineStart);
      } else {
        // the splat schema defines no other elements; tolerate only
        // trailing empty ones
        const extra = Number(tokens[2]);
        if (!Number.isInteger(extra)) throw new PlyError(`bad element count '${tokens[2]}'`, lineStart);
        if (extra !== 0 || !seenVertex) throw new PlyError(`unsupported element '${tokens[1]}'`, lineStart);
        inTrailingElement = true;
      }
    } else if (tokens[0] === "property") {
      if (inTrailingElement) continue;
      if (!seenVertex) throw new PlyError("property before any element", lineStart);
      if (tokens.length >= 2 && tokens[1] === "list") {
        throw new PlySchemaError(
          "list properties are not part of the splat schema",
          tokens.length > 2 ? tokens[tokens.length - 1]! : "?"
        );
      }
      if (tokens.length !== 3) throw new PlyError(`malformed property line '${line}'`, lineStart);
      props.push({ type: tokens[1]!, name: tokens[2]! });
    } else if (tokens[0] === "end_header") {
      bodyOffset = offset;
      break;
    } else {
      throw new PlyError(`unrecognized header line '${line}'`, lineStart);
    }
  }
  if (bodyOffset === null) throw new PlyError("header has no end_header line", limit);
  if (format === null) throw new PlyError("header has no format line", bodyOffset);
  if (count === null) throw new PlyError("header has no vertex element", bodyOffset);
  return { format, count, props, bodyOffset };
}

function schemaColumnMap(props: Header["props"]): Map<string, number> {
  const nameToIdx = new Map<string, number>();
  for (let i = 0; i < props.length; i++) {
    const { type, name } = props[i]!;
    if (!(type in SCALAR_TYPES)) {
      throw new PlySchemaError(`unsupported property type '${type}'`, name);
    }
    if (SCHEMA_SET.has(name) && !FLOAT_TYPES.has(type)) {
      throw new PlySchemaError(`property has type '${type}', expected float`, name);
    }
    if (!nameToIdx.has(name)) nameToIdx.set(name, i);
  }
  for (const required of SPLAT_PLY_PROPERTIES) {
    if (!nameToIdx.has(required)) {
      throw new PlySchemaError("missing required property", required);
    }
  }
  return nameToIdx;
}

export function parseSplatPly(buffer: ArrayBuffer | Uint8Array): SplatCloud {
  const data = buffer instanceof Uint8Array ? buffer : new Uint8Array(buffer);
  const { format, count, props, bodyOffset } = parseHeader(data);
  const nameToIdx = schemaColumnMap(props);
  const schemaCols = SPLAT_PLY_PROPERTIES.map((name) => nameToIdx.get(name)!);
  const values = new Float32Array(count * STRIDE);

  if (format === "binary_little_endian") {
    const fileStride = props.reduce((sum, p) => sum + SCALAR_TYPES[p.type]!.size, 0);
    const expected = count * fileStride;
    const actual = data.length - bodyOffset;
    if (actual < expected) {
      throw new PlyError(`truncated PLY body: expected ${expected} bytes, got ${actual}`, data.length);
    }
    const offsets: number[] = [];
    let acc = 0;
    for (const p of props) {
      offsets.push(acc);
      acc += SCALAR_TYPES[p.type]!.size;
    }
    const view = new DataView(data.buffer, data.byteOffset + bodyOffset, expected);
    for (let row = 0; row < count; row++) {
      const base = row * fileStride;
      for (let j = 0; j < STRIDE; j++) {
        const col = schemaCols[j]!;
        values[row * STRIDE + j] = SCALAR_TYPES[props[col]!.type]!.read(view, base + offsets[col]!);
      }
    }
    return { count, values };
  }

  // ASCII body: whitespace-separated values, row-major
  const text = new TextDecoder("utf-8").decode(data.subarray(bodyOffset));
  const tokens = text.split(/\s+/).filter((t) => t.length > 0);
  const expectedValues = count * props.length;
  if (tokens.length < expectedValues) {
    throw new PlyError(
      `truncated PLY body: expected ${expectedValues} values, got ${tokens.length}`,
      data.length
    );
  }
  for (let row = 0; row < count; row++) {
    const base = row * props.length;
    for (let j = 0; j < STRIDE; j++) {
      const token = tokens[base + schemaCols[j]!]!;
      const parsed = Number(token);
      if (Number.isNaN(parsed) && !/^[+-]?nan$/i.test(token)) {
        throw new PlyError("non-numeric token in ASCII body", bodyOffset);
      }
      values[row * STRIDE + j] = Math.fround(parsed);
    }
  }
  return { count, values };
}

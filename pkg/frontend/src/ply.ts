// Minimal PLY reader for the meshes the service produces: vertices with
// float x/y/z (optionally uchar red/green/blue) and triangulated faces.
// Handles ascii and binary_little_endian version 1.0.

export interface ParsedMesh {
  vertexCount: number;
  faceCount: number;
  positions: Float32Array; // 3 * vertexCount
  colors: Uint8Array | null; // 3 * vertexCount
  indices: Uint32Array; // 3 * faceCount
}

interface Property {
  name: string;
  type: string;
  listCountType?: string;
  listItemType?: string;
}

interface Element {
  name: string;
  count: number;
  properties: Property[];
}

const SCALAR_BYTES: Record<string, number> = {
  char: 1, uchar: 1, int8: 1, uint8: 1,
  short: 2, ushort: 2, int16: 2, uint16: 2,
  int: 4, uint: 4, int32: 4, uint32: 4, float: 4, float32: 4,
  double: 8, float64: 8,
};

export class PlyError extends Error {}

export function parsePly(buffer: ArrayBuffer): ParsedMesh {
  const bytes = new Uint8Array(buffer);
  const headerEnd = findHeaderEnd(bytes);
  const headerText = new TextDecoder("ascii").decode(bytes.subarray(0, headerEnd));
  const lines = headerText.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines[0] !== "ply") {
    throw new PlyError("missing ply magic");
  }

  let format = "";
  const elements: Element[] = [];
  for (const line of lines.slice(1)) {
    const parts = line.trim().split(/\s+/);
    if (parts[0] === "format") {
      format = parts[1];
    } else if (parts[0] === "element") {
      elements.push({ name: parts[1], count: parseInt(parts[2], 10), properties: [] });
    } else if (parts[0] === "property") {
      const element = elements[elements.length - 1];
      if (!element) throw new PlyError("property before element");
      if (parts[1] === "list") {
        element.properties.push({
          name: parts[4],
          type: "list",
          listCountType: parts[2],
          listItemType: parts[3],
        });
      } else {
        element.properties.push({ name: parts[2], type: parts[1] });
      }
    } else if (parts[0] === "comment" || parts[0] === "end_header") {
      continue;
    }
  }
  if (format !== "ascii" && format !== "binary_little_endian") {
    throw new PlyError(`unsupported format ${format}`);
  }

  const vertexElement = elements.find((e) => e.name === "vertex");
  const faceElement = elements.find((e) => e.name === "face");
  if (!vertexElement || !faceElement) {
    throw new PlyError("missing vertex or face element");
  }

  const body = bytes.subarray(headerEnd);
  const reader =
    format === "ascii"
      ? new AsciiReader(new TextDecoder("ascii").decode(body))
      : new BinaryReader(body);

  const positions = new Float32Array(vertexElement.count * 3);
  const names = vertexElement.properties.map((p) => p.name);
  const hasColor = ["red", "green", "blue"].every((n) => names.includes(n));
  const colors = hasColor ? new Uint8Array(vertexElement.count * 3) : null;

  for (let v = 0; v < vertexElement.count; v++) {
    for (const prop of vertexElement.properties) {
      if (prop.type === "list") throw new PlyError("list property on vertex");
      const value = reader.scalar(prop.type);
      if (prop.name === "x") positions[v * 3] = value;
      else if (prop.name === "y") positions[v * 3 + 1] = value;
      else if (prop.name === "z") positions[v * 3 + 2] = value;
      else if (colors && prop.name === "red") colors[v * 3] = value;
      else if (colors && prop.name === "green") colors[v * 3 + 1] = value;
      else if (colors && prop.name === "blue") colors[v * 3 + 2] = value;
    }
  }

  const indices: number[] = [];
  for (let f = 0; f < faceElement.count; f++) {
    for (const prop of faceElement.properties) {
      if (prop.type !== "list") {
        reader.scalar(prop.type);
        continue;
      }
      const n = reader.scalar(prop.listCountType!);
      const poly: number[] = [];
      for (let i = 0; i < n; i++) {
        poly.push(reader.scalar(prop.listItemType!));
      }
      if (poly.length < 3) throw new PlyError("degenerate face");
      for (let i = 1; i + 1 < poly.length; i++) {
        indices.push(poly[0], poly[i], poly[i + 1]); // fan-triangulate
      }
    }
  }

  for (const idx of indices) {
    if (idx < 0 || idx >= vertexElement.count) {
      throw new PlyError(`face index ${idx} out of range`);
    }
  }

  return {
    vertexCount: vertexElement.count,
    faceCount: indices.length / 3,
    positions,
    colors,
    indices: new Uint32Array(indices),
  };
}

function findHeaderEnd(bytes: Uint8Array): number {
  const marker = "end_header";
  const text = new TextDecoder("ascii").decode(
    bytes.subarray(0, Math.min(bytes.length, 65536)),
  );
  const at = text.indexOf(marker);
  if (at < 0) throw new PlyError("missing end_header");
  const newline = text.indexOf("\n", at);
  if (newline < 0) throw new PlyError("truncated header");
  return newline + 1;
}

class AsciiReader {
  private tokens: string[];
  private pos = 0;

  constructor(text: string) {
    this.tokens = text.split(/\s+/).filter((t) => t.length > 0);
  }

  scalar(_type: string): number {
    if (this.pos >= this.tokens.length) throw new PlyError("truncated body");
    const value = Number(this.tokens[this.pos++]);
    if (Number.isNaN(value)) throw new PlyError("non-numeric token in body");
    return value;
  }
}

class BinaryReader {
  private view: DataView;
  private pos = 0;

  constructor(bytes: Uint8Array) {
    this.view = new DataView(bytes.buffer, bytes.byteOffset, bytes.byteLength);
  }

  scalar(type: string): number {
    const size = SCALAR_BYTES[type];
    if (!size) throw new PlyError(`unknown scalar type ${type}`);
    if (this.pos + size > this.view.byteLength) throw new PlyError("truncated body");
    const at = this.pos;
    this.pos += size;
    switch (type) {
      case "char": case "int8": return this.view.getInt8(at);
      case "uchar": case "uint8": return this.view.getUint8(at);
      case "short": case "int16": return this.view.getInt16(at, true);
      case "ushort": case "uint16": return this.view.getUint16(at, true);
      case "int": case "int32": return this.view.getInt32(at, true);
      case "uint": case "uint32": return this.view.getUint32(at, true);
      case "float": case "float32": return this.view.getFloat32(at, true);
      default: return this.view.getFloat64(at, true);
    }
  }
}

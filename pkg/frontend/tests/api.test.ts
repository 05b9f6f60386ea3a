import { describe, expect, it } from "vitest";

import { MAX_UPLOAD_BYTES, validateUpload } from "../src/api.js";

const PNG_HEAD = new Uint8Array([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

describe("validateUpload", () => {
  it("accepts a small PNG", () => {
    expect(validateUpload("sprite.png", 1024, PNG_HEAD)).toBeNull();
  });

  it("rejects non-PNG content regardless of extension", () => {
    const jpeg = new Uint8Array([0xff, 0xd8, 0xff, 0xe0, 0, 0, 0, 0]);
    expect(validateUpload("photo.png", 1024, jpeg)).toMatch(/not a PNG/);
    expect(validateUpload("notes.txt", 10, new Uint8Array([0x68, 0x69]))).toMatch(/not a PNG/);
  });

  it("rejects files at or above 20 MB", () => {
    expect(validateUpload("big.png", 25 * 1024 * 1024, PNG_HEAD)).toMatch(/20 MB/);
    expect(validateUpload("edge.png", MAX_UPLOAD_BYTES, PNG_HEAD)).toMatch(/20 MB/);
    expect(validateUpload("under.png", MAX_UPLOAD_BYTES - 1, PNG_HEAD)).toBeNull();
  });
});

/** IDX image/label readers (big-endian headers, uint8 payload). */

export const IDX_IMAGES_MAGIC = 0x00000803;
export const IDX_LABELS_MAGIC = 0x00000801;

export class IdxError extends Error {}

export interface IdxImages {
  count: number;
  height: number;
  width: number;
  pixels: Uint8Array; // count*height*width, row-major
}

export function readIdxImages(data: Uint8Array): IdxImages {
  if (data.length < 16) {
    throw new IdxError("IDX image file too short for its header");
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const magic = view.getUint32(0);
  if (magic !== IDX_IMAGES_MAGIC) {
    throw new IdxError(`bad IDX image magic: 0x${magic.toString(16).padStart(8, "0")}`);
  }
  const count = view.getUint32(4);
  const height = view.getUint32(8);
  const width = view.getUint32(12);
  if (count === 0) {
    throw new IdxError("IDX image file holds zero images");
  }
  if (data.length !== 16 + count * height * width) {
    throw new IdxError(
      `IDX payload is ${data.length - 16} bytes, header implies ${count * height * width}`);
  }
  return { count, height, width, pixels: data.subarray(16) };
}

export function readIdxLabels(data: Uint8Array): Uint8Array {
  if (data.length < 8) {
    throw new IdxError("IDX label file too short for its header");
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const magic = view.getUint32(0);
  if (magic !== IDX_LABELS_MAGIC) {
    throw new IdxError(`bad IDX label magic: 0x${magic.toString(16).padStart(8, "0")}`);
  }
  const count = view.getUint32(4);
  if (count === 0) {
    throw new IdxError("IDX label file holds zero labels");
  }
  if (data.length !== 8 + count) {
    throw new IdxError(
      `IDX payload is ${data.length - 8} bytes, header implies ${count}`);
  }
  return data.subarray(8);
}

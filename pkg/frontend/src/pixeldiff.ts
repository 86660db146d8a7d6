import { FACE_LABEL, HAIR_LABEL } from "./labels";
import { decodeBase64Png } from "./png";

/**
 * Pixel agreement between two generated images over the wearer's head.
 *
 * The service keeps hair and face pixels from the source photo, so two
 * generations of the same wearer must agree exactly on that region no
 * matter how the caption changed.
 */
export interface HeadDiff {
  headTotal: number;
  headChanged: number;
  bodyChanged: number;
}

export function headMask(indices: Uint8Array): Uint8Array {
  const mask = new Uint8Array(indices.length);
  for (let i = 0; i < indices.length; i++) {
    const label = indices[i];
    mask[i] = label === HAIR_LABEL || label === FACE_LABEL ? 1 : 0;
  }
  return mask;
}

export function compareHeadRegion(
  segmapB64: string,
  imageAB64: string,
  imageBB64: string,
): HeadDiff {
  const seg = decodeBase64Png(segmapB64);
  if (!seg.indices) throw new Error("segmap must be a palette PNG");
  const a = decodeBase64Png(imageAB64);
  const b = decodeBase64Png(imageBB64);
  if (
    a.width !== seg.width || a.height !== seg.height ||
    b.width !== seg.width || b.height !== seg.height
  ) {
    throw new Error("image and segmap sizes differ");
  }
  const mask = headMask(seg.indices);
  let headTotal = 0;
  let headChanged = 0;
  let bodyChanged = 0;
  for (let i = 0; i < mask.length; i++) {
    const o = i * 3;
    const same =
      a.rgb[o] === b.rgb[o] &&
      a.rgb[o + 1] === b.rgb[o + 1] &&
      a.rgb[o + 2] === b.rgb[o + 2];
    if (mask[i]) {
      headTotal += 1;
      if (!same) headChanged += 1;
    } else if (!same) {
      bodyChanged += 1;
    }
  }
  return { headTotal, headChanged, bodyChanged };
}

export function headPreserved(diff: HeadDiff): boolean {
  return diff.headChanged === 0;
}

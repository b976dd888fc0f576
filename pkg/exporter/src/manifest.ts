/**
 * Types mirroring the engine's on-disk model format (format_version 1).
 *
 * A model directory holds `model.json` plus raw weight blobs: little-endian
 * IEEE-754 float32, row-major, no header. Dense weights are [m, n], conv
 * weights [out_ch, in_ch, kh, kw], biases [m]. Inputs are channels-first.
 */

export type Pair = [number, number];

export interface AffineEntry {
  kind: 'affine_relu' | 'affine';
  op: 'dense' | 'conv2d';
  weights: string;
  bias: string;
  out_channels?: number;
  kernel?: Pair;
  stride?: Pair;
  padding?: Pair;
}

export interface MaxPoolEntry {
  kind: 'maxpool2d';
  kernel: Pair;
  stride: Pair;
  padding: Pair;
}

export interface PlainEntry {
  kind: 'flatten' | 'identity';
}

export type LayerEntry = AffineEntry | MaxPoolEntry | PlainEntry;

export interface Manifest {
  format_version: 1;
  input_shape: number[];
  layers: LayerEntry[];
  class_labels?: string[];
}

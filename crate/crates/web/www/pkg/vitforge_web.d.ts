/* tslint:disable */
/* eslint-disable */

/**
 * An image after decoding, resizing and normalization.
 */
export class Preprocessed {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Resized pixels as RGBA, ready for `ImageData`.
     */
    rgba(): Uint8Array;
    summary(): string;
}

/**
 * A synthetic tiny-ViT training run advanced one epoch per call.
 */
export class Trainer {
    free(): void;
    [Symbol.dispose](): void;
    classify(bytes: Uint8Array): string;
    curves(): string;
    epochs_done(): number;
    image_size(): number;
    /**
     * `samples` synthetic training images (a quarter as many for validation).
     */
    constructor(samples: number, epochs: number, lr: number, seed: number);
    /**
     * RGBA pixels of preview image `index`.
     */
    preview(index: number): Uint8Array;
    /**
     * Number of preview training images.
     */
    preview_count(): number;
    preview_label(index: number): string;
    /**
     * ROC curve of the validation set with `fire` as the positive class.
     */
    roc(): string;
    /**
     * One epoch; returns `{log, line, done}`.
     */
    step(): string;
}

export function metrics_from_counts(fire_as_fire: number, fire_as_nofire: number, nofire_as_fire: number, nofire_as_nofire: number): string;

/**
 * Decodes a PNG or JPEG, resizes it to `size`×`size` and normalizes it.
 */
export function preprocess_image(bytes: Uint8Array, size: number): Preprocessed;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_preprocessed_free: (a: number, b: number) => void;
    readonly __wbg_trainer_free: (a: number, b: number) => void;
    readonly metrics_from_counts: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly preprocess_image: (a: number, b: number, c: number) => [number, number, number];
    readonly preprocessed_rgba: (a: number) => [number, number];
    readonly preprocessed_summary: (a: number) => [number, number];
    readonly trainer_classify: (a: number, b: number, c: number) => [number, number, number, number];
    readonly trainer_curves: (a: number) => [number, number];
    readonly trainer_epochs_done: (a: number) => number;
    readonly trainer_image_size: (a: number) => number;
    readonly trainer_new: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly trainer_preview: (a: number, b: number) => [number, number];
    readonly trainer_preview_count: (a: number) => number;
    readonly trainer_preview_label: (a: number, b: number) => [number, number];
    readonly trainer_roc: (a: number) => [number, number];
    readonly trainer_step: (a: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;

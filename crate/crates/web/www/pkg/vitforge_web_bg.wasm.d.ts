/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_preprocessed_free: (a: number, b: number) => void;
export const __wbg_trainer_free: (a: number, b: number) => void;
export const metrics_from_counts: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const preprocess_image: (a: number, b: number, c: number) => [number, number, number];
export const preprocessed_rgba: (a: number) => [number, number];
export const preprocessed_summary: (a: number) => [number, number];
export const trainer_classify: (a: number, b: number, c: number) => [number, number, number, number];
export const trainer_curves: (a: number) => [number, number];
export const trainer_epochs_done: (a: number) => number;
export const trainer_image_size: (a: number) => number;
export const trainer_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const trainer_preview: (a: number, b: number) => [number, number];
export const trainer_preview_count: (a: number) => number;
export const trainer_preview_label: (a: number, b: number) => [number, number];
export const trainer_roc: (a: number) => [number, number];
export const trainer_step: (a: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_start: () => void;

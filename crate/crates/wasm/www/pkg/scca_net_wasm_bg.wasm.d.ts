/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_explorer_free: (a: number, b: number) => void;
export const explorer_detect: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const explorer_entropy_surface: (a: number, b: number, c: number) => [number, number, number, number];
export const explorer_genes: (a: number) => number;
export const explorer_last_entropy: (a: number) => number;
export const explorer_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const explorer_truth: (a: number) => [number, number];
export const explorer_weave: (a: number, b: number, c: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;

/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_cell_free: (a: number, b: number) => void;
export const cell_get: (a: number, b: number, c: number) => [number, number, number];
export const cell_new: () => [number, number, number];
export const cell_reset: (a: number) => void;
export const cell_set: (a: number, b: number, c: number, d: number) => [number, number];
export const cell_set_mode: (a: number, b: number) => void;
export const cell_simulate: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const cell_spectrum: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const cell_sweep: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;

/* tslint:disable */
/* eslint-disable */

/**
 * Cell model held by the page.
 */
export class Cell {
    free(): void;
    [Symbol.dispose](): void;
    get(name: string): number;
    /**
     * Reference parameters on a light mesh suited to interactive use.
     */
    constructor();
    reset(): void;
    set(name: string, value: number): void;
    set_mode(spm: boolean): void;
    /**
     * Constant-current steps from rest at `soc0`. `currents` and
     * `durations` pair up; returns `[t, i, v]` triples every `dt` seconds.
     */
    simulate(soc0: number, currents: Float64Array, durations: Float64Array, dt: number): Float64Array;
    /**
     * `[f, re, im]` triples at equilibrium.
     */
    spectrum(soc: number, f_min: number, f_max: number, n: number): Float64Array;
    /**
     * Sweep of one parameter over [0.5, 2] times nominal: for each step
     * the value followed by `n` `[f, re, im]` triples.
     */
    sweep(name: string, steps: number, soc: number, f_min: number, f_max: number, n: number): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_cell_free: (a: number, b: number) => void;
    readonly cell_get: (a: number, b: number, c: number) => [number, number, number];
    readonly cell_new: () => [number, number, number];
    readonly cell_reset: (a: number) => void;
    readonly cell_set: (a: number, b: number, c: number, d: number) => [number, number];
    readonly cell_set_mode: (a: number, b: number) => void;
    readonly cell_simulate: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly cell_spectrum: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly cell_sweep: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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

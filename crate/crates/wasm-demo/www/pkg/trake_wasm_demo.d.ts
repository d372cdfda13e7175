/* tslint:disable */
/* eslint-disable */

export class ToyIndex {
    free(): void;
    [Symbol.dispose](): void;
    constructor(corpus: string, dim: number);
    /**
     * Top-`k` lines as a JSON array of `{line, text, score}`.
     */
    search(query: string, k: number): string;
    readonly size: number;
}

/**
 * `rows_json` is a JSON array of equal-length number arrays. Returns the
 * alignment as JSON.
 */
export function alignEvents(rows_json: string, lambda: number): string;

export function sampleKeyframes(a: number, b: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_toyindex_free: (a: number, b: number) => void;
    readonly alignEvents: (a: number, b: number, c: number) => [number, number, number, number];
    readonly sampleKeyframes: (a: number, b: number) => [number, number, number, number];
    readonly toyindex_new: (a: number, b: number, c: number) => [number, number, number];
    readonly toyindex_search: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly toyindex_size: (a: number) => number;
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

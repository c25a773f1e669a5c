/* tslint:disable */
/* eslint-disable */

export class Explorer {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Votes hierarchical clusterings of the `keep` lowest-entropy matrices
     * on the grid and scores the result against the planted groups.
     */
    detect(range: string, keep: number, min_small: number): string;
    /**
     * Entropy on the square grid `start:end:step`, as `[λ1, λ2, H]`
     * triples flattened in grid order. An all-zero matrix reports `H = ∞`.
     */
    entropy_surface(range: string): Float64Array;
    genes(): number;
    /**
     * Entropy of the last woven matrix.
     */
    last_entropy(): number;
    /**
     * Simulates `p` genes over `n` experiments with planted groups of the
     * given sizes (comma separated) and prepares the resampling plan.
     */
    constructor(p: number, n: number, groups: string, dependency: number, partitions: number, rounds: number, seed: number);
    /**
     * Planted groups as JSON lists of gene positions.
     */
    truth(): string;
    /**
     * Row-major `p × p` edge weights at `(λ1, λ2)`.
     */
    weave(lambda1: number, lambda2: number): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_explorer_free: (a: number, b: number) => void;
    readonly explorer_detect: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly explorer_entropy_surface: (a: number, b: number, c: number) => [number, number, number, number];
    readonly explorer_genes: (a: number) => number;
    readonly explorer_last_entropy: (a: number) => number;
    readonly explorer_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly explorer_truth: (a: number) => [number, number];
    readonly explorer_weave: (a: number, b: number, c: number) => [number, number, number, number];
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

/* tslint:disable */
/* eslint-disable */

/**
 * Smallest machine consistent with a JSONL trace corpus.
 */
export function infer(traces: string, max_k: number, budget_nodes: number): string;

/**
 * One learner run; returns the reward curve and the final machine.
 */
export function learn(env: string, variant: string, episodes: number, seed: number, budget_nodes: number): string;

/**
 * Random-policy traces for a bundled task, in the JSONL trace format.
 */
export function simulate(env: string, variant: string, episodes: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly infer: (a: number, b: number, c: number, d: number) => [number, number];
    readonly learn: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number];
    readonly simulate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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

/* tslint:disable */
/* eslint-disable */

/**
 * Synthesized gains and their decay certificate. A negative `mu_hat`
 * selects `μ̂ = |S*|` with a scan fallback.
 */
export function certify_gains(e: number, length: number, s_star: number, mu_hat: number): string;

/**
 * Linear closed loop driven through the velocity feedback law of the
 * chosen variant (`"riemann-gain"` or `"coth-closed-form"`), starting from a
 * unit stress hump. Returns the Lyapunov series and the certified envelope
 * `L(0)·e^{−μt}`.
 */
export function closed_loop(e: number, length: number, s_star: number, n_cells: number, t_end: number, variant: string): string;

/**
 * `μ(μ̂)` and the bound `μ̂ − 2|S*|` on `n` points of `[0, mu_hat_max]`.
 */
export function decay_curve(e: number, length: number, s_star: number, mu_hat_max: number, n: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly certify_gains: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly closed_loop: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly decay_curve: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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

/* tslint:disable */
/* eslint-disable */

/**
 * Interpolation test error with the normalized variance and bias bounds
 * for `points` values of kappa, log-spaced on [e^lo, e^hi].
 */
export function kappa_sweep(n: number, d: number, lo: number, hi: number, points: number, seed: number): string;

/**
 * Operator-norm distance between the exponential inner-product kernel
 * matrix and its linearization, for isotropic Gaussian data.
 */
export function linearization_error(n: number, d: number, seed: number): string;

/**
 * Covariance eigenvalues for decay `kappa` in dimension `d`, with the
 * normalized trace and the trace-proxy regularization r.
 */
export function spectrum(kappa: number, d: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly kappa_sweep: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly linearization_error: (a: number, b: number, c: number) => [number, number, number, number];
    readonly spectrum: (a: number, b: number) => [number, number, number, number];
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
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

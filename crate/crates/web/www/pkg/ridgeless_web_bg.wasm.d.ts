/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const kappa_sweep: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const linearization_error: (a: number, b: number, c: number) => [number, number, number, number];
export const spectrum: (a: number, b: number) => [number, number, number, number];
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
